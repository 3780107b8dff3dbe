"""PSNR (Y or RGB) and SSIM on [0, 1] images, plus the CSV metrics report."""

import csv
import math
import warnings
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

PSNR_CAP = 100.0
# full-range BT.601 luma; coefficients sum to one
LUMA = (0.299, 0.587, 0.114)


def _prepare(pred, target):
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    pred = pred.detach().double()
    target = target.detach().double()
    if pred.dim() == 3:
        pred, target = pred[None], target[None]
    for name, t in (("pred", pred), ("target", target)):
        if t.min() < 0 or t.max() > 1:
            warnings.warn(f"{name} outside [0, 1]; clamping", RuntimeWarning, stacklevel=3)
    return pred.clamp(0, 1), target.clamp(0, 1)


def rgb_to_y(img):
    r, g, b = img[:, 0:1], img[:, 1:2], img[:, 2:3]
    return LUMA[0] * r + LUMA[1] * g + LUMA[2] * b


def psnr(pred, target, mode="y", data_range=1.0):
    """PSNR in dB; identical images report :data:`PSNR_CAP`."""
    pred, target = _prepare(pred, target)
    mode = mode.lower()
    if mode == "y":
        pred, target = rgb_to_y(pred), rgb_to_y(target)
    elif mode != "rgb":
        raise ValueError(f"mode must be 'y' or 'rgb', got {mode!r}")
    mse = torch.mean((pred - target) ** 2).item()
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(data_range ** 2 / mse))


def gaussian_window(size=11, sigma=1.5, dtype=torch.float64):
    t = torch.arange(size, dtype=dtype) - (size - 1) / 2
    g = torch.exp(-(t ** 2) / (2 * sigma ** 2))
    g = g / g.sum()
    return g[:, None] * g[None, :]


def ssim(pred, target, window_size=11, sigma=1.5, data_range=1.0):
    """Mean SSIM over channels and valid window positions."""
    pred, target = _prepare(pred, target)
    h, w = pred.shape[-2:]
    if min(h, w) < window_size:
        new = min(h, w) if min(h, w) % 2 else min(h, w) - 1
        warnings.warn(f"image {h}x{w} smaller than the {window_size}x{window_size} "
                      f"SSIM window; using {new}x{new}", RuntimeWarning, stacklevel=2)
        window_size = max(1, new)
    c = pred.shape[1]
    win = gaussian_window(window_size, sigma).expand(c, 1, window_size, window_size)

    def filt(x):
        return F.conv2d(x, win, groups=c)

    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu1, mu2 = filt(pred), filt(target)
    s11 = filt(pred * pred) - mu1 * mu1
    s22 = filt(target * target) - mu2 * mu2
    s12 = filt(pred * target) - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return (num / den).mean().item()


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)

    COLUMNS = ("image_id", "psnr_y", "psnr_rgb", "ssim_rgb")

    def add(self, image_id, pred, target):
        row = {"image_id": image_id,
               "psnr_y": psnr(pred, target, "y"),
               "psnr_rgb": psnr(pred, target, "rgb"),
               "ssim_rgb": ssim(pred, target)}
        self.rows.append(row)
        return row

    def means(self):
        if not self.rows:
            raise ValueError("empty report")
        n = len(self.rows)
        return {k: sum(r[k] for r in self.rows) / n for k in self.COLUMNS[1:]}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            writer.writeheader()
            writer.writerows(self.rows)
            writer.writerow({"image_id": "mean", **self.means()})

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if r["image_id"] != "mean"]
        return cls([{k: (v if k == "image_id" else float(v)) for k, v in r.items()}
                    for r in rows])

    def summary(self):
        m = self.means()
        return (f"{len(self.rows)} images  PSNR-Y {m['psnr_y']:.2f} dB  "
                f"PSNR-RGB {m['psnr_rgb']:.2f} dB  SSIM {m['ssim_rgb']:.4f}")

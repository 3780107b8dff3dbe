"""Synthetic rainy/clean pairs built with the PSF-dictionary degradation."""

from pathlib import Path

import numpy as np
import torch

from .data import IMAGE_SUFFIXES, load_image, save_image, to_tensor
from .psf import PSFDictionary, rain_streak_kernels, random_weight_field, synthesize_degradation


def save_dictionary(path, kernels, smoothness=4.0):
    np.savez(path, kernels=np.asarray(kernels, dtype=np.float64), smoothness=smoothness)


def load_dictionary(path):
    with np.load(path) as f:
        kernels = torch.from_numpy(f["kernels"]).double()
        smoothness = float(f["smoothness"]) if "smoothness" in f else 4.0
    if kernels.dim() != 3:
        raise ValueError(f"{path}: 'kernels' must be [K_c, K, K]")
    return kernels, smoothness


def make_dictionary(num_kernels=4, size=7, seed=0):
    gen = torch.Generator().manual_seed(seed)
    return rain_streak_kernels(num_kernels, size, gen)


def make_clean_image(size, rng):
    """Procedural scene: smooth gradient, a few flat shapes and fine stripes."""
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w] / size
    img = np.empty((h, w, 3))
    base = rng.uniform(0.2, 0.8, 3)
    slope = rng.uniform(-0.3, 0.3, (2, 3))
    for c in range(3):
        img[..., c] = base[c] + slope[0, c] * (yy - 0.5) + slope[1, c] * (xx - 0.5)
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(0, 1, 2)
        ry, rx = rng.uniform(0.08, 0.3, 2)
        color = rng.uniform(0, 1, 3)
        if rng.random() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        img[mask] = color
    freq = rng.uniform(6, 14)
    theta = rng.uniform(0, np.pi)
    stripes = 0.12 * np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy))
    img += stripes[..., None]
    return (np.clip(img, 0, 1) * 255).round().astype(np.uint8)


def degrade(clean, kernels, seed=0, smoothness=4.0):
    """Blur an HxWx3 uint8 image with a random per-pixel mix of ``kernels``."""
    x = to_tensor(clean, torch.float64)
    gen = torch.Generator().manual_seed(seed)
    field = random_weight_field(1, kernels.shape[0], *x.shape[-2:], generator=gen,
                                smoothness=smoothness)
    y = synthesize_degradation(x, PSFDictionary(kernels.double(), field))
    return (y[0].clamp(0, 1) * 255).round().byte().permute(1, 2, 0).numpy()


def synthesize_dir(dict_path, in_dir, out_dir, seed=0):
    """Degrade every image in ``in_dir``; write ``out/input`` and ``out/gt``."""
    kernels, smoothness = load_dictionary(dict_path)
    out = Path(out_dir)
    paths = sorted(p for p in Path(in_dir).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise FileNotFoundError(f"no images in {in_dir}")
    for i, p in enumerate(paths):
        clean = load_image(p)
        save_image(out / "gt" / f"{p.stem}.png", clean)
        save_image(out / "input" / f"{p.stem}.png", degrade(clean, kernels, seed + i, smoothness))
    return len(paths)


def make_synthetic_dataset(root, count=8, size=64, num_kernels=4, kernel_size=7, seed=0):
    """Write ``count`` procedural pairs plus ``dictionary.npz`` under ``root``."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    kernels = make_dictionary(num_kernels, kernel_size, seed)
    root.mkdir(parents=True, exist_ok=True)
    save_dictionary(root / "dictionary.npz", kernels)
    for i in range(count):
        clean = make_clean_image(size, rng)
        save_image(root / "gt" / f"{i:04d}.png", clean)
        save_image(root / "input" / f"{i:04d}.png", degrade(clean, kernels, seed + i))
    return root

"""Paired rainy/clean datasets, training patches and inference padding.

Dataset layout::

    root/
      input/   rainy images
      gt/      clean images with the same file stems

An optional ``manifest.txt`` in ``root`` (or passed explicitly) lists pairs as
``<input path> <gt path>`` lines relative to ``root``; when present it replaces
directory matching.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

log = logging.getLogger(__name__)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


def _stats(like):
    shape = (3, 1, 1) if like.dim() == 3 else (1, 3, 1, 1)
    mean = torch.tensor(IMAGENET_MEAN, dtype=like.dtype, device=like.device).view(shape)
    std = torch.tensor(IMAGENET_STD, dtype=like.dtype, device=like.device).view(shape)
    return mean, std


def normalize(img):
    mean, std = _stats(img)
    return (img - mean) / std


def denormalize(img):
    mean, std = _stats(img)
    return img * std + mean


def load_image(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_image(path, img):
    """Save an HxWx3 uint8 array or a [3,H,W] / [1,3,H,W] tensor in [0, 1]."""
    if isinstance(img, torch.Tensor):
        t = img.detach().cpu().double()
        if t.dim() == 4:
            t = t[0]
        img = (t.clamp(0, 1) * 255).round().byte().permute(1, 2, 0).numpy()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img).save(path)


def to_tensor(arr, dtype=torch.float32):
    """HxWx3 uint8 -> [1, 3, H, W] in [0, 1]."""
    return torch.from_numpy(np.array(arr, copy=True)).permute(2, 0, 1)[None].to(dtype) / 255.0


@dataclass
class ImagePair:
    rainy: np.ndarray
    clean: np.ndarray
    id: str

    def __post_init__(self):
        if self.rainy.shape != self.clean.shape:
            raise ValueError(f"pair {self.id}: {self.rainy.shape} vs {self.clean.shape}")


@dataclass
class PatchSample:
    x: torch.Tensor
    y: torch.Tensor


class PairDataset(Dataset):
    def __init__(self, root, entries):
        self.root = Path(root)
        self.entries = list(entries)  # (id, input_path, gt_path)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, idx):
        image_id, inp, gt = self.entries[idx]
        return ImagePair(load_image(inp), load_image(gt), image_id)

    @property
    def ids(self):
        return [e[0] for e in self.entries]


def _image_size(path):
    with Image.open(path) as im:
        return im.size


def _read_manifest(root, manifest):
    entries = []
    for line in Path(manifest).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        inp, gt = line.split()
        entries.append((Path(inp).stem, root / inp, root / gt))
    return entries


def load_pair_dataset(root_dir, manifest=None):
    """Validated, sorted pairs from ``root/input`` and ``root/gt``.

    Orphans, unreadable files and size mismatches are skipped with a warning.
    """
    root = Path(root_dir)
    if manifest is None and (root / "manifest.txt").exists():
        manifest = root / "manifest.txt"
    if manifest is not None:
        candidates = _read_manifest(root, manifest)
    else:
        def stems(d):
            if not d.is_dir():
                return {}
            return {p.stem: p for p in sorted(d.iterdir())
                    if p.suffix.lower() in IMAGE_SUFFIXES}
        inputs, gts = stems(root / "input"), stems(root / "gt")
        for orphan in sorted(set(inputs) ^ set(gts)):
            side = "input" if orphan in inputs else "gt"
            log.warning("skipping %s: no counterpart for %s/%s", orphan, side, orphan)
        candidates = [(s, inputs[s], gts[s]) for s in sorted(set(inputs) & set(gts))]

    entries, skipped = [], 0
    for image_id, inp, gt in candidates:
        try:
            a, b = _image_size(inp), _image_size(gt)
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: unreadable (%s)", image_id, exc)
            skipped += 1
            continue
        if a != b:
            log.warning("skipping %s: size mismatch %s vs %s", image_id, a, b)
            skipped += 1
            continue
        entries.append((image_id, inp, gt))
    if not entries:
        raise FileNotFoundError(f"no valid image pairs under {root}")
    if skipped:
        log.warning("%d of %d pairs skipped", skipped, len(candidates))
    return PairDataset(root, entries)


def sample_rng(seed, epoch, index):
    """Per-sample generator; the stream does not depend on worker scheduling."""
    return np.random.default_rng([seed, epoch, index])


def augment(arr, flip_h, flip_v, rot):
    if flip_h:
        arr = arr[:, ::-1]
    if flip_v:
        arr = arr[::-1]
    return np.rot90(arr, rot, axes=(0, 1))


def _pad_to(arr, size):
    ph, pw = max(0, size - arr.shape[0]), max(0, size - arr.shape[1])
    if ph or pw:
        arr = np.pad(arr, ((0, ph), (0, pw), (0, 0)), mode="symmetric")
    return arr


def make_training_patch(pair: ImagePair, rng, patch_size=128):
    """Aligned random crop + flips/rot90 of a pair, scaled and ImageNet-normalized."""
    rainy, clean = _pad_to(pair.rainy, patch_size), _pad_to(pair.clean, patch_size)
    h, w = rainy.shape[:2]
    top = int(rng.integers(0, h - patch_size + 1))
    left = int(rng.integers(0, w - patch_size + 1))
    flip_h, flip_v = bool(rng.integers(2)), bool(rng.integers(2))
    rot = int(rng.integers(4))
    out = []
    for arr in (rainy, clean):
        crop = arr[top:top + patch_size, left:left + patch_size]
        out.append(normalize(to_tensor(augment(crop, flip_h, flip_v, rot))))
    return PatchSample(*out)


class TrainPatches(Dataset):
    """Random training patches, reproducible from (seed, epoch, index)."""

    def __init__(self, pairs, patch_size=128, seed=0, cache=True):
        self.pairs = pairs
        self.patch_size = patch_size
        self.seed = seed
        self.epoch = 0
        self._cache = {} if cache else None

    def set_epoch(self, epoch):
        self.epoch = epoch

    def __len__(self):
        return len(self.pairs)

    def _pair(self, idx):
        if self._cache is None:
            return self.pairs[idx]
        if idx not in self._cache:
            self._cache[idx] = self.pairs[idx]
        return self._cache[idx]

    def __getitem__(self, idx):
        s = make_training_patch(self._pair(idx), sample_rng(self.seed, self.epoch, idx),
                                self.patch_size)
        return s.x[0], s.y[0]


def _reflect_index(n, total, device):
    i = torch.arange(total, device=device)
    if n == 1:
        return torch.zeros_like(i)
    period = 2 * (n - 1)
    i = i % period
    return torch.where(i < n, i, period - i)


def reflect_pad_for_inference(image, multiple=4):
    """Reflect-pad the bottom/right of ``[B, C, H, W]`` to a multiple of ``multiple``.

    Returns ``(padded, crop_box)`` with ``crop_box = (top, left, height, width)``.
    """
    h, w = image.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    padded = image
    if ph:
        padded = padded.index_select(-2, _reflect_index(h, h + ph, image.device))
    if pw:
        padded = padded.index_select(-1, _reflect_index(w, w + pw, image.device))
    return padded, (0, 0, h, w)


def crop(image, box):
    top, left, h, w = box
    return image[..., top:top + h, left:left + w]

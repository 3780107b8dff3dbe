import logging

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from sdpsfnet.data import (IMAGENET_MEAN, IMAGENET_STD, ImagePair, TrainPatches, augment, crop,
                           denormalize, load_image, load_pair_dataset, make_training_patch,
                           normalize, reflect_pad_for_inference, sample_rng, save_image,
                           to_tensor)


def _write_pairs(root, n, size=(8, 8), seed=0):
    rng = np.random.default_rng(seed)
    for i in range(n):
        img = rng.integers(0, 256, (*size, 3), dtype=np.uint8)
        save_image(root / "input" / f"{i:03d}.png", img)
        save_image(root / "gt" / f"{i:03d}.png", 255 - img)


def test_dataset_sorted_pairs(tmp_path):
    _write_pairs(tmp_path, 5)
    ds = load_pair_dataset(tmp_path)
    assert len(ds) == 5 and ds.ids == [f"{i:03d}" for i in range(5)]
    pair = ds[2]
    assert pair.id == "002" and pair.rainy.shape == (8, 8, 3)
    assert np.array_equal(pair.clean, 255 - pair.rainy)


def test_dataset_skips_orphan_and_mismatch(tmp_path, caplog):
    _write_pairs(tmp_path, 4)
    save_image(tmp_path / "input" / "orphan.png", np.zeros((8, 8, 3), np.uint8))
    save_image(tmp_path / "gt" / "001.png", np.zeros((9, 8, 3), np.uint8))
    (tmp_path / "gt" / "002.png").write_bytes(b"not an image")
    with caplog.at_level(logging.WARNING):
        ds = load_pair_dataset(tmp_path)
    assert ds.ids == ["000", "003"]
    text = caplog.text
    assert "orphan" in text and "size mismatch" in text and "unreadable" in text
    assert "2 of 4 pairs skipped" in text


def test_dataset_empty_is_fatal(tmp_path):
    (tmp_path / "input").mkdir()
    with pytest.raises(FileNotFoundError):
        load_pair_dataset(tmp_path)


def test_manifest(tmp_path):
    _write_pairs(tmp_path, 3)
    (tmp_path / "manifest.txt").write_text("# pairs\ninput/002.png gt/002.png\n\ninput/000.png gt/000.png\n")
    ds = load_pair_dataset(tmp_path)
    assert ds.ids == ["002", "000"]


def test_image_pair_shape_check():
    with pytest.raises(ValueError):
        ImagePair(np.zeros((4, 4, 3), np.uint8), np.zeros((4, 5, 3), np.uint8), "x")


def test_save_load_tensor_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (5, 7, 3), dtype=np.uint8)
    save_image(tmp_path / "a.png", to_tensor(img))
    assert np.array_equal(load_image(tmp_path / "a.png"), img)


# --- patches -----------------------------------------------------------------------------

def _pair(h, w, seed=0, same=False):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    return ImagePair(a, a.copy() if same else rng.integers(0, 256, (h, w, 3), dtype=np.uint8), "p")


def test_patch_deterministic():
    pair = _pair(40, 50)
    a = make_training_patch(pair, sample_rng(0, 1, 2), 16)
    b = make_training_patch(pair, sample_rng(0, 1, 2), 16)
    assert torch.equal(a.x, b.x) and torch.equal(a.y, b.y)
    assert a.x.shape == (1, 3, 16, 16)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), h=st.integers(16, 40), w=st.integers(16, 40))
def test_patch_alignment(seed, h, w):
    # y = x must stay equal after crop and augmentation
    s = make_training_patch(_pair(h, w, same=True), np.random.default_rng(seed), 16)
    assert torch.equal(s.x, s.y)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_patch_is_transformed_window(seed):
    # every patch equals some flip/rotation of the crop window the rng selects
    pair = _pair(24, 20, seed=1)
    s = make_training_patch(pair, np.random.default_rng(seed), 12)
    rng = np.random.default_rng(seed)
    top, left = int(rng.integers(0, 13)), int(rng.integers(0, 9))
    fh, fv, rot = bool(rng.integers(2)), bool(rng.integers(2)), int(rng.integers(4))
    window = pair.rainy[top:top + 12, left:left + 12]
    assert torch.equal(s.x, normalize(to_tensor(augment(window, fh, fv, rot))))


def test_patch_full_window_and_small_image():
    pair = _pair(16, 16, seed=3)
    s = make_training_patch(pair, np.random.default_rng(0), 16)
    plain = normalize(to_tensor(pair.rainy))
    assert any(torch.equal(s.x, normalize(to_tensor(augment(pair.rainy, fh, fv, r))))
               for fh in (0, 1) for fv in (0, 1) for r in range(4))
    assert s.x.shape == plain.shape
    # images smaller than the patch are padded first
    assert make_training_patch(_pair(5, 9), np.random.default_rng(0), 16).x.shape == (1, 3, 16, 16)


def test_gray_normalization():
    gray = np.full((4, 4, 3), 0.5)
    x = normalize(torch.from_numpy(gray).permute(2, 0, 1)[None])
    for c in range(3):
        assert torch.allclose(x[0, c], torch.full((4, 4), (0.5 - IMAGENET_MEAN[c]) / IMAGENET_STD[c],
                                                  dtype=torch.float64))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_normalize_round_trip(seed):
    v = torch.rand(2, 3, 5, 5, generator=torch.Generator().manual_seed(seed))
    assert (denormalize(normalize(v)) - v).abs().max() < 1e-6
    assert torch.allclose(denormalize(normalize(v[0])), v[0], atol=1e-6)


def test_train_patches_seeded_stream():
    pairs = [_pair(20, 20, seed=i) for i in range(3)]
    ds = TrainPatches(pairs, patch_size=8, seed=4)
    first = [ds[i] for i in range(3)]
    again = [ds[i] for i in (2, 0, 1)]  # access order does not matter
    assert torch.equal(first[2][0], again[0][0]) and torch.equal(first[0][1], again[1][1])
    ds.set_epoch(1)
    assert not torch.equal(ds[0][0], first[0][0])
    assert first[0][0].shape == (3, 8, 8)


# --- inference padding ---------------------------------------------------------------------

def test_pad_noop_for_divisible():
    img = torch.rand(1, 3, 128, 128)
    padded, box = reflect_pad_for_inference(img)
    assert padded is img and box == (0, 0, 128, 128)


def test_pad_130x131():
    img = torch.rand(1, 3, 130, 131)
    padded, box = reflect_pad_for_inference(img)
    assert padded.shape[-2:] == (132, 132)
    assert padded.shape[-2] - 130 == 2 and padded.shape[-1] - 131 == 1
    # reflection: first padded row mirrors row 128 about the last row 129
    assert torch.equal(padded[..., 130, :131], img[..., 128, :])
    assert torch.equal(padded[..., 131, :131], img[..., 127, :])
    assert torch.equal(padded[..., :130, 131], img[..., :, 129])
    assert torch.equal(crop(padded, box), img)


def test_pad_matches_torch_reflect():
    img = torch.rand(1, 3, 9, 10)
    padded, _ = reflect_pad_for_inference(img)
    ref = torch.nn.functional.pad(img, (0, 2, 0, 3), mode="reflect")
    assert torch.equal(padded, ref)


def test_pad_one_pixel():
    img = torch.rand(1, 3, 1, 1)
    padded, box = reflect_pad_for_inference(img)
    assert padded.shape == (1, 3, 4, 4)
    assert torch.equal(padded, img.expand(1, 3, 4, 4))
    assert torch.equal(crop(padded, box), img)


@settings(max_examples=60, deadline=None)
@given(h=st.integers(1, 20), w=st.integers(1, 20))
def test_pad_round_trip(h, w):
    img = torch.rand(1, 2, h, w)
    padded, box = reflect_pad_for_inference(img)
    assert padded.shape[-2] % 4 == 0 and padded.shape[-1] % 4 == 0
    assert padded.shape[-2] - h < 4 and padded.shape[-1] - w < 4
    assert torch.equal(crop(padded, box), img)

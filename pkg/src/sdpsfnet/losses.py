"""Deep-supervision loss: Charbonnier + edge (Laplacian) + DFT-magnitude terms."""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

LAPLACIAN = torch.tensor([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass
class LossWeights:
    alpha1: float = 0.05
    alpha2: float = 0.01
    charbonnier_eps: float = 1e-3

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.charbonnier_eps) < 0:
            raise ValueError("loss weights must be nonnegative")


def _same_shape(pred, target):
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")


def charbonnier(pred, target, eps=1e-3):
    _same_shape(pred, target)
    diff = pred - target
    return torch.sqrt(diff * diff + eps * eps).mean()


def laplacian(x):
    """Per-channel 3x3 Laplacian with reflection padding."""
    c = x.shape[1]
    k = LAPLACIAN.to(x).expand(c, 1, 3, 3)
    return F.conv2d(F.pad(x, (1, 1, 1, 1), mode="reflect"), k, groups=c)


def edge_loss(pred, target, eps=1e-3):
    _same_shape(pred, target)
    return charbonnier(laplacian(pred), laplacian(target), eps)


def freq_loss(pred, target):
    """Mean absolute difference of per-channel 2-D DFT magnitudes."""
    _same_shape(pred, target)
    return (torch.fft.fft2(pred).abs() - torch.fft.fft2(target).abs()).abs().mean()


def stage_loss(pred, target, weights: LossWeights):
    char = charbonnier(pred, target, weights.charbonnier_eps)
    edge = edge_loss(pred, target, weights.charbonnier_eps)
    freq = freq_loss(pred, target)
    return char, edge, freq


def total_loss(intermediates, final, target, weights=None, supervise_final=True):
    """Sum of the hybrid loss over every supervised restoration.

    Returns ``(loss, breakdown)`` where ``breakdown`` holds the summed
    ``char``, ``edge`` and ``freq`` terms as floats.
    """
    weights = weights or LossWeights()
    outputs = list(intermediates)
    if supervise_final and final is not None:
        outputs.append(final)
    if not outputs:
        raise ValueError("no outputs to supervise")
    loss = 0.0
    parts = {"char": 0.0, "edge": 0.0, "freq": 0.0}
    for out in outputs:
        char, edge, freq = stage_loss(out, target, weights)
        loss = loss + char + weights.alpha1 * edge + weights.alpha2 * freq
        parts["char"] += char.item()
        parts["edge"] += edge.item()
        parts["freq"] += freq.item()
    return loss, parts

"""Dynamic point spread function prediction, normalization and degradation.

The network never sees a fixed blur kernel. Each stage pools its encoder
features into small per-image kernels (one softmax head per scale), fuses the
heads with channel attention and projects them into ``K_c`` kernels of size
``K x K``. Every such kernel is a probability distribution over its support.

:func:`synthesize_degradation` applies a dictionary of kernels mixed by a
per-pixel weight field. It is not part of the forward pass; it generates
synthetic training pairs and serves as a reference for tests.
"""

from dataclasses import dataclass
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import CAB

DEFAULT_EPS = 1e-8


class ConfigurationError(ValueError):
    """Raised when tensor shapes disagree with a module's configuration."""


def spatial_normalize(raw: torch.Tensor, eps: float = DEFAULT_EPS) -> torch.Tensor:
    """Make every ``[b, c]`` slice of ``raw`` nonnegative and sum to one.

    Negative entries are clipped to zero. Slices whose clipped sum is below
    ``eps`` are replaced by the uniform kernel ``1 / K**2``.
    """
    if raw.dim() != 4:
        raise ConfigurationError(f"expected [B, K_c, K, K], got {tuple(raw.shape)}")
    pos = raw.clamp(min=0)
    total = pos.sum(dim=(2, 3), keepdim=True)
    degenerate = total < eps
    safe_total = torch.where(degenerate, torch.ones_like(total), total)
    uniform = torch.full_like(pos, 1.0 / (raw.shape[2] * raw.shape[3]))
    return torch.where(degenerate, uniform, pos / safe_total)


def check_psf(psf: torch.Tensor, atol: float = 1e-5) -> None:
    """Assert the multi-channel PSF contract (nonnegative, unit sum per channel)."""
    if psf.dim() != 4 or psf.shape[2] != psf.shape[3] or psf.shape[2] % 2 == 0:
        raise AssertionError(f"bad PSF shape {tuple(psf.shape)}")
    if (psf < 0).any():
        raise AssertionError("PSF has negative entries")
    sums = psf.sum(dim=(2, 3))
    err = (sums - 1).abs().max().item()
    if err > atol:
        raise AssertionError(f"PSF channel sums deviate from 1 by {err:.3g}")


def predict_single_scale_psf(features, weight, bias=None):
    """Pool ``features`` to 1x1, project with a 1x1 conv and softmax over k^2.

    ``weight`` has shape ``[k*k, C, 1, 1]``. Returns ``[B, k*k, 1, 1]``.
    """
    if features.shape[1] != weight.shape[1]:
        raise ConfigurationError(
            f"features have {features.shape[1]} channels, head expects {weight.shape[1]}")
    k2 = weight.shape[0]
    k = math.isqrt(k2)
    if k * k != k2 or k % 2 == 0:
        raise ConfigurationError(f"head output {k2} is not an odd square")
    pooled = F.adaptive_avg_pool2d(features, 1)
    logits = F.conv2d(pooled, weight, bias)
    return torch.softmax(logits, dim=1)


class SingleScalePSFHead(nn.Module):
    def __init__(self, in_channels, kernel_size):
        super().__init__()
        if kernel_size % 2 == 0 or kernel_size < 1:
            raise ConfigurationError(f"head size must be odd, got {kernel_size}")
        self.kernel_size = kernel_size
        self.proj = nn.Conv2d(in_channels, kernel_size * kernel_size, 1, bias=True)

    def forward(self, features):
        return predict_single_scale_psf(features, self.proj.weight, self.proj.bias)


class MultiScalePSFHead(nn.Module):
    """Predict a ``[B, K_c, K, K]`` PSF from multi-scale encoder features.

    Head ``j`` reads encoder scale ``min(j, n_scales - 1)``, so the default
    3x3/5x5/7x7 heads see the finest, middle and coarsest features in turn.
    """

    def __init__(self, in_channels, head_sizes=(3, 5, 7), psf_channels=40,
                 psf_size=7, reduction=16, eps=DEFAULT_EPS):
        super().__init__()
        if psf_size % 2 == 0:
            raise ConfigurationError(f"PSF size must be odd, got {psf_size}")
        if psf_channels < 1:
            raise ConfigurationError("psf_channels must be >= 1")
        in_channels = list(in_channels)
        self.scale_index = [min(j, len(in_channels) - 1) for j in range(len(head_sizes))]
        self.heads = nn.ModuleList(
            SingleScalePSFHead(in_channels[s], k)
            for s, k in zip(self.scale_index, head_sizes))
        self.concat_channels = sum(k * k for k in head_sizes)
        self.fuse = CAB(self.concat_channels, kernel_size=3, reduction=reduction,
                        bias=True)
        self.project = nn.Conv2d(self.concat_channels,
                                 psf_channels * psf_size * psf_size, 1, bias=True)
        self.psf_channels = psf_channels
        self.psf_size = psf_size
        self.eps = eps

    def predict_flat(self, feats):
        return [head(feats[s]) for head, s in zip(self.heads, self.scale_index)]

    def fuse_flat(self, flat_psfs):
        """Concatenate flat PSFs, fuse with the CAB, project and normalize."""
        if len(flat_psfs) != len(self.heads):
            raise ConfigurationError(
                f"expected {len(self.heads)} flat PSFs, got {len(flat_psfs)}")
        if len({p.shape[0] for p in flat_psfs}) != 1:
            raise ValueError("flat PSFs have mismatched batch sizes")
        cat = torch.cat(flat_psfs, dim=1)
        if cat.shape[1] != self.concat_channels:
            raise ConfigurationError(
                f"concatenated PSF has {cat.shape[1]} channels, expected {self.concat_channels}")
        refined = self.project(self.fuse(cat))
        raw = refined.view(cat.shape[0], self.psf_channels, self.psf_size, self.psf_size)
        return spatial_normalize(F.softplus(raw), self.eps)

    def forward(self, feats):
        return self.fuse_flat(self.predict_flat(feats))


def fuse_multiscale_psf(flat_psfs, head: MultiScalePSFHead):
    return head.fuse_flat(flat_psfs)


class PSFChannelReducer(nn.Module):
    """Map a ``K_c``-channel PSF to ``target`` channels with 1x1 convolutions.

    Targets below a quarter of the input width go through an intermediate
    layer of ``max(1, K_c // 4)`` channels; otherwise a single 1x1 map is used.
    The result is renormalized per channel.
    """

    def __init__(self, in_channels, target_channels, eps=DEFAULT_EPS):
        super().__init__()
        if target_channels < 1:
            raise ConfigurationError(f"target_channels must be >= 1, got {target_channels}")
        self.in_channels = in_channels
        self.target_channels = target_channels
        self.eps = eps
        if target_channels < in_channels / 4:
            mid = max(1, in_channels // 4)
            self.maps = nn.Sequential(nn.Conv2d(in_channels, mid, 1, bias=True),
                                      nn.Conv2d(mid, target_channels, 1, bias=True))
        else:
            self.maps = nn.Sequential(nn.Conv2d(in_channels, target_channels, 1, bias=True))
        self.reset_parameters()

    @property
    def two_step(self):
        return len(self.maps) == 2

    def reset_parameters(self):
        # positive mixing weights keep the mapped kernels nonnegative at init
        # without making the intermediate channels identical
        for m in self.maps:
            with torch.no_grad():
                m.weight.uniform_(0.5, 1.5).div_(m.in_channels)
                m.bias.zero_()

    def forward(self, psf):
        if psf.shape[1] != self.in_channels:
            raise ConfigurationError(
                f"PSF has {psf.shape[1]} channels, reducer expects {self.in_channels}")
        return spatial_normalize(self.maps(psf), self.eps)


def reduce_psf_channels(psf, reducer: PSFChannelReducer):
    return reducer(psf)


@dataclass
class PSFDictionary:
    """Learnable kernel patterns mixed per pixel by a simplex weight field."""

    kernels: torch.Tensor       # [K_c, K, K]
    weight_field: torch.Tensor  # [B, K_c, H, W]

    def __post_init__(self):
        if self.kernels.dim() != 3 or self.kernels.shape[1] != self.kernels.shape[2]:
            raise ValueError(f"kernels must be [K_c, K, K], got {tuple(self.kernels.shape)}")
        if self.kernels.shape[1] % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.weight_field.dim() != 4 or self.weight_field.shape[1] != self.kernels.shape[0]:
            raise ValueError("weight_field must be [B, K_c, H, W] matching the kernel count")
        if not torch.isfinite(self.kernels).all():
            raise ValueError("kernels must be finite")

    @property
    def num_kernels(self):
        return self.kernels.shape[0]

    @property
    def kernel_size(self):
        return self.kernels.shape[-1]

    def check_simplex(self, atol=1e-5):
        w = self.weight_field
        if (w < 0).any():
            raise AssertionError("weight field has negative entries")
        err = (w.sum(dim=1) - 1).abs().max().item()
        if err > atol:
            raise AssertionError(f"weight field is off the simplex by {err:.3g}")

    def local_kernel(self, b, x, y):
        """The effective kernel ``sum_j w_j(x, y) k_j`` at one pixel."""
        return torch.einsum("j,juv->uv", self.weight_field[b, :, x, y], self.kernels)


def synthesize_degradation(image: torch.Tensor, dictionary: PSFDictionary) -> torch.Tensor:
    """Spatially varying blur: ``out = sum_j w_j * (k_j conv image)``.

    Convolution (not correlation) with reflection padding at the borders.
    """
    B, C, H, W = image.shape
    w = dictionary.weight_field
    if w.shape[2:] != (H, W):
        raise ValueError(f"weight field is {tuple(w.shape[2:])}, image is {(H, W)}")
    if w.shape[0] not in (1, B):
        raise ValueError(f"weight field batch {w.shape[0]} does not match image batch {B}")
    kernels = dictionary.kernels.to(image)
    r = dictionary.kernel_size // 2
    padded = F.pad(image, (r, r, r, r), mode="reflect") if r else image
    flipped = torch.flip(kernels, dims=(-2, -1)).unsqueeze(1)
    blurred = F.conv2d(padded.reshape(B * C, 1, H + 2 * r, W + 2 * r), flipped)
    blurred = blurred.view(B, C, dictionary.num_kernels, H, W)
    return torch.einsum("bjhw,bcjhw->bchw", w.to(image).expand(B, -1, -1, -1), blurred)


def random_weight_field(batch, num_kernels, height, width, generator=None,
                        smoothness=4.0, dtype=torch.float64):
    """Smooth random field on the probability simplex over ``num_kernels``."""
    noise = torch.randn(batch, num_kernels, height, width, generator=generator, dtype=dtype)
    if smoothness > 0:
        radius = max(1, int(round(2 * smoothness)))
        t = torch.arange(-radius, radius + 1, dtype=dtype)
        g = torch.exp(-0.5 * (t / smoothness) ** 2)
        g = g / g.sum()
        mode = "reflect" if min(height, width) > radius else "replicate"
        noise = F.pad(noise, (radius, radius, 0, 0), mode=mode)
        noise = F.conv2d(noise.reshape(-1, 1, *noise.shape[2:]), g.view(1, 1, 1, -1))
        noise = F.pad(noise, (0, 0, radius, radius), mode=mode)
        noise = F.conv2d(noise, g.view(1, 1, -1, 1)).view(batch, num_kernels, height, width)
        noise = noise / noise.std().clamp(min=1e-12)
    return torch.softmax(3.0 * noise, dim=1)


def rain_streak_kernels(num_kernels, size, generator=None, dtype=torch.float64):
    """Oriented line kernels (rain-streak motion blur), each summing to one."""
    r = size // 2
    ys, xs = torch.meshgrid(torch.arange(-r, r + 1, dtype=dtype),
                            torch.arange(-r, r + 1, dtype=dtype), indexing="ij")
    out = []
    for _ in range(num_kernels):
        u = torch.rand(3, generator=generator, dtype=dtype)
        # near-vertical streaks, tilted up to +-35 degrees
        angle = math.pi / 2 + (u[0].item() - 0.5) * math.radians(70)
        length = r * (0.5 + 0.5 * u[1].item()) + 0.5
        width = 0.35 + 0.4 * u[2].item()
        dx, dy = math.cos(angle), math.sin(angle)
        along = xs * dx + ys * dy
        across = -xs * dy + ys * dx
        k = torch.exp(-0.5 * (across / width) ** 2) * (along.abs() <= length)
        out.append(k / k.sum())
    return torch.stack(out)

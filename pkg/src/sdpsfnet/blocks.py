"""Attention blocks: CAB, PSF-aware attention, PSF block, SAM and ORB."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import CAB, CALayer, conv, zero_
from .psf import PSFChannelReducer

__all__ = ["CAB", "CALayer", "PSFEncoder", "PSFAwareAttention", "PSFBlock",
           "SAM", "ORB", "channel_attention_block"]


def channel_attention_block(x, cab: CAB):
    return cab(x)


class PSFEncoder(nn.Module):
    """Conv stack over the KxK kernel grid, pooled to a ``[B, D]`` embedding."""

    def __init__(self, in_channels=1, embed_dim=64, hidden=64):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_channels, hidden, 3, padding=1, bias=True),
            nn.PReLU(),
            nn.Conv2d(hidden, embed_dim, 3, padding=1, bias=True),
            nn.PReLU(),
            nn.AdaptiveAvgPool2d(1),
        )

    def forward(self, psf):
        return self.body(psf).flatten(1)


class PSFAwareAttention(nn.Module):
    """Channel modulation and spatial attention driven by a stage PSF.

    ``x_mod = x * gamma + beta`` where ``[gamma, beta]`` come from an MLP on the
    PSF embedding; the result is multiplied by a sigmoid map computed from
    ``x_mod`` concatenated with the single-channel PSF upsampled to ``H x W``.
    """

    def __init__(self, n_feat, psf_channels, embed_dim=64, hidden=128,
                 spatial_kernel=7):
        super().__init__()
        self.n_feat = n_feat
        self.reducer = PSFChannelReducer(psf_channels, 1) if psf_channels > 1 else None
        self.encoder = PSFEncoder(1, embed_dim)
        self.to_modulation = nn.Sequential(
            nn.Linear(embed_dim, hidden),
            nn.PReLU(),
            nn.Linear(hidden, 2 * n_feat),
        )
        with torch.no_grad():
            bias = self.to_modulation[-1].bias
            bias[:n_feat].fill_(1.0)
            bias[n_feat:].zero_()
        self.spatial = nn.Conv2d(n_feat + 1, 1, spatial_kernel,
                                 padding=spatial_kernel // 2, bias=True)

    def single_channel(self, psf):
        return self.reducer(psf) if self.reducer is not None else psf

    def encode(self, psf):
        return self.encoder(self.single_channel(psf))

    def modulation(self, psf):
        gb = self.to_modulation(self.encode(psf))
        return gb[:, :self.n_feat], gb[:, self.n_feat:]

    def attention_map(self, x_mod, psf):
        p1 = self.single_channel(psf)
        k2 = p1.shape[-1] * p1.shape[-2]
        # rescale by K^2 so a uniform kernel maps to a field of ones
        up = F.interpolate(p1 * k2, size=x_mod.shape[-2:], mode="bilinear",
                           align_corners=False)
        return torch.sigmoid(self.spatial(torch.cat([x_mod, up], dim=1)))

    @staticmethod
    def modulate(x, gamma, beta):
        return x * gamma[:, :, None, None] + beta[:, :, None, None]

    def forward(self, x, psf):
        if x.shape[0] != psf.shape[0]:
            raise ValueError(f"feature batch {x.shape[0]} != PSF batch {psf.shape[0]}")
        gamma, beta = self.modulation(psf)
        x_mod = self.modulate(x, gamma, beta)
        return x_mod * self.attention_map(x_mod, psf)

    def set_identity(self):
        """gamma = 1, beta = 0 and an attention map saturated at one."""
        last = self.to_modulation[-1]
        with torch.no_grad():
            last.weight.zero_()
            last.bias[:self.n_feat].fill_(1.0)
            last.bias[self.n_feat:].zero_()
            self.spatial.weight.zero_()
            self.spatial.bias.fill_(1e4)
        return self


def encode_psf(psf, attention: PSFAwareAttention):
    return attention.encode(psf)


def psf_aware_attention(x, psf, attention: PSFAwareAttention):
    return attention(x, psf)


class PSFBlock(nn.Module):
    """``x + PSFA(body(x), psf)`` with ``body = conv -> act -> conv``."""

    def __init__(self, n_feat, psf_channels, kernel_size=3, bias=False,
                 embed_dim=64):
        super().__init__()
        self.body = nn.Sequential(
            conv(n_feat, n_feat, kernel_size, bias=bias),
            nn.PReLU(),
            conv(n_feat, n_feat, kernel_size, bias=bias),
        )
        self.psfa = PSFAwareAttention(n_feat, psf_channels, embed_dim=embed_dim)

    @property
    def tail(self):
        return self.body[-1]

    def forward(self, x, psf):
        return x + self.psfa(self.body(x), psf)


class SAM(nn.Module):
    """Supervised attention module.

    Produces the stage restoration ``img = conv2(x) + x_img`` and re-weights
    the features with a sigmoid mask computed from that restoration.
    """

    def __init__(self, n_feat, kernel_size=3, bias=False):
        super().__init__()
        self.conv1 = conv(n_feat, n_feat, kernel_size, bias=bias)
        self.conv2 = conv(n_feat, 3, kernel_size, bias=bias)
        self.conv3 = conv(3, n_feat, kernel_size, bias=bias)

    @property
    def tail(self):
        return self.conv2

    def forward(self, x, x_img):
        if x.shape[-2:] != x_img.shape[-2:]:
            raise ValueError(f"features {tuple(x.shape[-2:])} and image "
                             f"{tuple(x_img.shape[-2:])} are not aligned")
        img = self.conv2(x) + x_img
        mask = torch.sigmoid(self.conv3(img))
        return img, self.conv1(x) * mask + x


def supervised_attention(features, img_in, sam: SAM):
    return sam(features, img_in)


class ORB(nn.Module):
    """Original-resolution block; side information is added before the chain."""

    def __init__(self, n_feat, kernel_size=3, reduction=4, bias=False, num_cab=8):
        super().__init__()
        body = [CAB(n_feat, kernel_size, reduction, bias=bias) for _ in range(num_cab)]
        body.append(conv(n_feat, n_feat, kernel_size, bias=bias))
        self.body = nn.Sequential(*body)

    def zero_tails(self):
        for m in self.body:
            zero_(m.tail if isinstance(m, CAB) else m)

    def forward(self, x, side=None):
        if side is not None:
            x = x + side
        return x + self.body(x)


def original_resolution_block(features, side_info, orb: ORB):
    return orb(features, side_info)

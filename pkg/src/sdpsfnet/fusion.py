"""Gated cross-stage feature fusion."""

import torch
import torch.nn as nn

from .layers import CAB, conv

FUSION_MODES = ("gate", "add", "off")


class GatedFusion(nn.Module):
    """Convex, per-channel mix of a current and a historical feature map.

    ``G = sigmoid(conv(relu(conv(gap([current, prev])))))`` and the output is
    ``G * current + (1 - G) * prev``. ``mode="add"`` replaces the gate by a
    plain sum (the ungated baseline) and ``mode="off"`` passes ``current``
    through unchanged (pathway disabled).
    """

    def __init__(self, channels, prev_channels=None, mode="gate"):
        super().__init__()
        if mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {mode!r}")
        self.mode = mode
        self.channels = channels
        prev_channels = prev_channels or channels
        self.project = (nn.Conv2d(prev_channels, channels, 1, bias=False)
                        if prev_channels != channels else None)
        hidden = max(1, channels // 4)
        # the ungated baseline is fixed at construction and carries no gate
        self.gate = None if mode == "add" else nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Conv2d(2 * channels, hidden, 1, bias=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, channels, 1, bias=True),
            nn.Sigmoid(),
        )

    def align(self, prev):
        return self.project(prev) if self.project is not None else prev

    def weights(self, current, prev):
        return self.gate(torch.cat([current, prev], dim=1))

    def forward(self, current, prev):
        if self.mode == "off" or prev is None:
            return current
        prev = self.align(prev)
        if current.shape != prev.shape:
            raise ValueError(f"cannot fuse {tuple(current.shape)} with {tuple(prev.shape)}")
        if self.mode == "add" or self.gate is None:
            return current + prev
        g = self.weights(current, prev)
        # lerp is exact at G in {0, 1} and when current == prev
        return torch.lerp(prev, current, g.expand_as(current))

    def force(self, value):
        """Pin the gate to a constant 0 or 1 (for tests and ablations)."""
        if value not in (0, 1):
            raise ValueError("gate can only be forced to 0 or 1")
        if self.gate is None:
            raise ValueError("additive fusion has no gate to force")
        last = self.gate[-2]
        with torch.no_grad():
            last.weight.zero_()
            last.bias.fill_(1e4 if value == 1 else -1e4)
        return self


def gated_fuse(f_current, f_prev, fusion: GatedFusion):
    return fusion(f_current, f_prev)


class ShallowFeatures(nn.Module):
    """conv + CAB on the input image, optionally fused with a history map."""

    def __init__(self, width, history_channels=None, mode="gate", kernel_size=3,
                 reduction=4, bias=False, in_channels=3):
        super().__init__()
        self.extract = nn.Sequential(conv(in_channels, width, kernel_size, bias=bias),
                                     CAB(width, kernel_size, reduction, bias=bias))
        self.fuse = (GatedFusion(width, history_channels, mode)
                     if history_channels else None)

    def forward(self, img, h_prev=None):
        x = self.extract(img)
        if self.fuse is not None and h_prev is not None:
            x = self.fuse(x, h_prev)
        return x


class EnhancedCSFF(nn.Module):
    """Dual-gated cross-stage feature fusion, one branch per encoder scale.

    ``out = conv(gate2(conv(gate1(enc, dec)), o_prev))``. Without history the
    second gate is skipped. ``enhanced=False`` gives the plain additive CSFF
    ``conv1x1(enc) + conv1x1(dec)``.
    """

    def __init__(self, widths, history=False, enhanced=True, mode="gate",
                 first_mode=None, second_mode=None, kernel_size=3, bias=False):
        super().__init__()
        self.enhanced = enhanced
        self.history = history
        widths = list(widths)
        self.widths = widths
        if enhanced:
            self.first = nn.ModuleList(GatedFusion(w, mode=first_mode or mode) for w in widths)
            self.mid = nn.ModuleList(conv(w, w, kernel_size, bias=bias) for w in widths)
            self.second = (nn.ModuleList(GatedFusion(w, mode=second_mode or mode)
                                         for w in widths) if history else None)
            self.out = nn.ModuleList(conv(w, w, kernel_size, bias=bias) for w in widths)
        else:
            self.enc_proj = nn.ModuleList(nn.Conv2d(w, w, 1, bias=bias) for w in widths)
            self.dec_proj = nn.ModuleList(nn.Conv2d(w, w, 1, bias=bias) for w in widths)

    def forward(self, enc_feats, dec_feats, o_prev=None):
        n = len(self.widths)
        if len(enc_feats) != n or len(dec_feats) != n or (o_prev is not None and len(o_prev) != n):
            raise ValueError(f"CSFF expects {n} scales in every input")
        outs = []
        for i in range(n):
            if not self.enhanced:
                outs.append(self.enc_proj[i](enc_feats[i]) + self.dec_proj[i](dec_feats[i]))
                continue
            c = self.mid[i](self.first[i](enc_feats[i], dec_feats[i]))
            if self.second is not None and o_prev is not None:
                c = self.second[i](c, o_prev[i])
            outs.append(self.out[i](c))
        return outs


def enhanced_csff(enc_feats, dec_feats, o_prev, csff: EnhancedCSFF):
    return csff(enc_feats, dec_feats, o_prev)

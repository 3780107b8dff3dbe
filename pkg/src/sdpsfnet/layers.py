"""Basic convolutional building blocks shared by every stage."""

import torch
import torch.nn as nn
import torch.nn.functional as F


def conv(in_channels, out_channels, kernel_size, bias=False, stride=1):
    return nn.Conv2d(in_channels, out_channels, kernel_size,
                     padding=kernel_size // 2, bias=bias, stride=stride)


class CALayer(nn.Module):
    """Squeeze-and-excitation channel gate: pool -> bottleneck -> sigmoid."""

    def __init__(self, channel, reduction=4, bias=False):
        super().__init__()
        hidden = max(1, channel // reduction)
        self.avg_pool = nn.AdaptiveAvgPool2d(1)
        self.conv_du = nn.Sequential(
            nn.Conv2d(channel, hidden, 1, padding=0, bias=bias),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, channel, 1, padding=0, bias=bias),
            nn.Sigmoid(),
        )

    def gate(self, x):
        return self.conv_du(self.avg_pool(x))

    def forward(self, x):
        return x * self.gate(x)


class CAB(nn.Module):
    """Residual channel attention block: x + CA(conv(act(conv(x))))."""

    def __init__(self, n_feat, kernel_size=3, reduction=4, bias=False, act=None):
        super().__init__()
        act = act if act is not None else nn.PReLU()
        self.body = nn.Sequential(
            conv(n_feat, n_feat, kernel_size, bias=bias),
            act,
            conv(n_feat, n_feat, kernel_size, bias=bias),
        )
        self.CA = CALayer(n_feat, reduction, bias=bias)

    @property
    def tail(self):
        return self.body[-1]

    def forward(self, x):
        res = self.CA(self.body(x))
        return res + x


class DownSample(nn.Module):
    # bilinear 0.5x on even sizes is a 2x2 box filter, i.e. antialiased stride 2
    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 1, bias=False)

    def forward(self, x):
        x = F.interpolate(x, scale_factor=0.5, mode="bilinear", align_corners=False)
        return self.conv(x)


class UpSample(nn.Module):
    def __init__(self, in_channels, out_channels, factor=2):
        super().__init__()
        self.factor = factor
        self.conv = nn.Conv2d(in_channels, out_channels, 1, bias=False)

    def forward(self, x):
        if self.factor != 1:
            x = F.interpolate(x, scale_factor=self.factor, mode="bilinear",
                              align_corners=False)
        return self.conv(x)


class SkipUpSample(UpSample):
    def forward(self, x, y):
        return super().forward(x) + y


def zero_(module: nn.Module) -> nn.Module:
    """Zero every parameter of ``module`` in place."""
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module

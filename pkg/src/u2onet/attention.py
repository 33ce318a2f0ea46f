"""Channel + spatial attention gates (CBAM-style).

Channel attention squeezes the map with global average and max pooling,
pushes both through a shared two-layer bottleneck MLP and gates each
channel with the sigmoid of the sum.  Spatial attention convolves the
channelwise mean/max pair into a per-pixel gate.  `CBAM` applies them in
that order, each as a multiplicative gate.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .validation import ConfigError


class ChannelAttention(nn.Module):
    def __init__(self, channels, reduction=16):
        super().__init__()
        reduction = min(reduction, channels)
        if channels % reduction:
            raise ConfigError(
                f"reduction ratio {reduction} must divide the channel count {channels}"
            )
        self.reduction = reduction
        self.fc1 = nn.Conv2d(channels, channels // reduction, 1)
        self.fc2 = nn.Conv2d(channels // reduction, channels, 1)

    def forward(self, x):
        avg = self.fc2(F.relu(self.fc1(F.adaptive_avg_pool2d(x, 1))))
        mx = self.fc2(F.relu(self.fc1(F.adaptive_max_pool2d(x, 1))))
        return torch.sigmoid(avg + mx)


class SpatialAttention(nn.Module):
    def __init__(self, kernel_size=7):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ConfigError("spatial attention kernel size must be odd")
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2)

    def forward(self, x):
        stats = torch.cat([x.mean(dim=1, keepdim=True),
                           x.max(dim=1, keepdim=True).values], dim=1)
        return torch.sigmoid(self.conv(stats))


class CBAM(nn.Module):
    """out = sa(x') * x' with x' = ca(x) * x; shape preserved."""

    def __init__(self, channels, reduction=16, kernel_size=7):
        super().__init__()
        self.channel = ChannelAttention(channels, reduction)
        self.spatial = SpatialAttention(kernel_size)

    def forward(self, x):
        x = self.channel(x) * x
        return self.spatial(x) * x

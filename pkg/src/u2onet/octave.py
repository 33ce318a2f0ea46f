"""Octave convolution and its per-frequency companions.

Feature maps are carried as an `OctaveTensor`: a full-resolution
high-frequency map paired with a half-resolution low-frequency map.
`OctaveConv2d` runs the four exchange paths (H->H, H->L, L->H, L->L):
the high output is f(X_h) plus the 2x-upsampled convolution of X_l, the
low output is f(avg_pool(X_h, 2)) plus f(X_l).  BatchNorm/ReLU and
pooling/upsampling act on the two maps independently.
"""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .validation import ConfigError, InputError, check_even_spatial, split_channels


@dataclass
class OctaveTensor:
    """A (high, low) frequency pair. `low` is None iff alpha == 0.

    Invariants (checked by `validate`): low spatial dims are exactly half
    of high's, and the channel split matches round(alpha * channels).
    """

    high: torch.Tensor
    low: Optional[torch.Tensor] = None

    @property
    def alpha(self) -> float:
        if self.low is None:
            return 0.0
        return self.low.shape[1] / self.channels

    @property
    def channels(self) -> int:
        c = self.high.shape[1]
        if self.low is not None:
            c += self.low.shape[1]
        return c

    def validate(self) -> "OctaveTensor":
        if self.low is not None:
            n, _, h, w = self.high.shape
            nl, _, hl, wl = self.low.shape
            if nl != n:
                raise InputError(f"batch mismatch between frequencies: {n} vs {nl}")
            if (hl, wl) != (h // 2, w // 2) or h % 2 or w % 2:
                raise InputError(
                    f"low map must be exactly half of high ({h}x{w}), got {hl}x{wl}"
                )
        return self

    def map(self, fn) -> "OctaveTensor":
        """Apply `fn` to both frequency maps."""
        return OctaveTensor(fn(self.high), None if self.low is None else fn(self.low))


def oct_split(x: torch.Tensor, alpha: float) -> OctaveTensor:
    """Split a dense map into frequency groups: the last round(alpha*C)
    channels become the low group, average-pooled to half resolution.

    alpha=0 wraps the input unchanged.  Parameter-free; a learned first
    layer is `OctaveConv2d(..., alpha_in=0, alpha_out=alpha)` instead.
    """
    c_high, c_low = split_channels(x.shape[1], alpha)
    if c_low == 0:
        return OctaveTensor(x)
    check_even_spatial(x, "oct_split input")
    return OctaveTensor(x[:, :c_high], F.avg_pool2d(x[:, c_high:], 2)).validate()


def oct_merge(x: OctaveTensor) -> torch.Tensor:
    """Collapse an octave pair to a dense map: the low group is nearest-
    upsampled 2x and concatenated after the high channels."""
    x.validate()
    if x.low is None:
        return x.high
    return torch.cat([x.high, F.interpolate(x.low, scale_factor=2, mode="nearest")], dim=1)


def oct_add(a: OctaveTensor, b: OctaveTensor) -> OctaveTensor:
    """Per-frequency elementwise sum."""
    if (a.low is None) != (b.low is None):
        raise InputError("cannot add octave tensors with mismatched frequency layout")
    low = None if a.low is None else a.low + b.low
    return OctaveTensor(a.high + b.high, low)


def oct_cat(a: OctaveTensor, b: OctaveTensor) -> OctaveTensor:
    """Per-frequency channel concatenation."""
    if (a.low is None) != (b.low is None):
        raise InputError("cannot concat octave tensors with mismatched frequency layout")
    low = None if a.low is None else torch.cat([a.low, b.low], dim=1)
    return OctaveTensor(torch.cat([a.high, b.high], dim=1), low)


def oct_max_pool(x: OctaveTensor) -> OctaveTensor:
    """2x2 stride-2 max pool on both maps in lockstep (keeps the 2:1 ratio)."""
    x.validate()
    if x.low is not None:
        check_even_spatial(x.low, "low map before pooling")
    return x.map(lambda t: F.max_pool2d(t, 2, stride=2))


def oct_upsample(x: OctaveTensor, scale: int = 2, mode: str = "bilinear") -> OctaveTensor:
    """Upsample both maps by `scale` (bilinear by default, as inside U-blocks)."""
    align = False if mode == "bilinear" else None
    if align is None:
        return x.map(lambda t: F.interpolate(t, scale_factor=scale, mode=mode))
    return x.map(lambda t: F.interpolate(t, scale_factor=scale, mode=mode, align_corners=align))


class OctaveConv2d(nn.Module):
    """Same-padded 2D convolution over an octave pair.

    Path weights exist only where both frequencies exist: alpha_in=0
    removes the L->* paths, alpha_out=0 the *->L paths; alpha_in=alpha_out=0
    degenerates to a vanilla convolution.
    """

    def __init__(self, in_channels, out_channels, kernel_size=3, alpha_in=0.5,
                 alpha_out=0.5, dilation=1, bias=True):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ConfigError("kernel size must be odd for same padding")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.alpha_in = alpha_in
        self.alpha_out = alpha_out
        self.in_high, self.in_low = split_channels(in_channels, alpha_in)
        self.out_high, self.out_low = split_channels(out_channels, alpha_out)
        if self.in_high == 0 or self.out_high == 0:
            raise ConfigError("a pure low-frequency tensor is never carried (alpha=1 rejected)")
        padding = dilation * (kernel_size - 1) // 2

        def conv(ci, co, with_bias):
            return nn.Conv2d(ci, co, kernel_size, padding=padding, dilation=dilation,
                             bias=bias and with_bias)

        # one bias per output frequency (on the H-> paths, which always exist),
        # so the total parameter count matches the dense convolution exactly
        self.conv_hh = conv(self.in_high, self.out_high, True)
        self.conv_hl = conv(self.in_high, self.out_low, True) if self.out_low else None
        self.conv_lh = conv(self.in_low, self.out_high, False) if self.in_low else None
        self.conv_ll = conv(self.in_low, self.out_low, False) if self.in_low and self.out_low else None

    def forward(self, x) -> OctaveTensor:
        if isinstance(x, torch.Tensor):
            if self.in_low:
                raise ConfigError("layer expects an octave pair (alpha_in > 0), got a dense map")
            x = OctaveTensor(x)
        x.validate()
        if x.high.shape[1] != self.in_high or (x.low.shape[1] if x.low is not None else 0) != self.in_low:
            raise ConfigError(
                f"channel split mismatch: layer expects ({self.in_high}H, {self.in_low}L), "
                f"got ({x.high.shape[1]}H, {0 if x.low is None else x.low.shape[1]}L)"
            )
        if self.out_low:
            check_even_spatial(x.high)

        high = self.conv_hh(x.high)
        if self.conv_lh is not None:
            high = high + F.interpolate(self.conv_lh(x.low), scale_factor=2, mode="nearest")
        low = None
        if self.conv_hl is not None:
            low = self.conv_hl(F.avg_pool2d(x.high, 2))
            if self.conv_ll is not None:
                low = low + self.conv_ll(x.low)
        return OctaveTensor(high, low)


class OctaveBatchNormReLU(nn.Module):
    """Per-frequency BatchNorm2d followed by ReLU; shapes unchanged."""

    def __init__(self, channels, alpha=0.5):
        super().__init__()
        c_high, c_low = split_channels(channels, alpha)
        self.bn_high = nn.BatchNorm2d(c_high)
        self.bn_low = nn.BatchNorm2d(c_low) if c_low else None

    def forward(self, x: OctaveTensor) -> OctaveTensor:
        high = F.relu(self.bn_high(x.high))
        low = None if x.low is None else F.relu(self.bn_low(x.low))
        return OctaveTensor(high, low)


class OctaveConvUnit(nn.Module):
    """conv -> BN -> ReLU over an octave pair; the building unit of ORSU."""

    def __init__(self, in_channels, out_channels, alpha_in=0.5, alpha_out=0.5, dilation=1):
        super().__init__()
        self.conv = OctaveConv2d(in_channels, out_channels, 3, alpha_in, alpha_out,
                                 dilation=dilation)
        self.bn_relu = OctaveBatchNormReLU(out_channels, alpha_out)

    def forward(self, x: OctaveTensor) -> OctaveTensor:
        return self.bn_relu(self.conv(x))

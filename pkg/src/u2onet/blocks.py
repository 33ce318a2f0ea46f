"""Octave residual U-blocks.

ORSU-L(C_in, M, C_out) is an input octave convolution F1, a symmetric
U-shaped encoder-decoder of height L over the octave pair, and a residual
per-frequency sum F1(x) + U(F1(x)) merged back to a dense map, so the
block's spatial resolution and channel contract look exactly like a plain
conv block from the outside.  ORSU-4F swaps the internal resampling for
increasing dilation rates so low-resolution stages keep their full grid.
"""

from dataclasses import dataclass

import torch.nn as nn

from .octave import (OctaveConvUnit, oct_add, oct_cat, oct_max_pool, oct_merge,
                     oct_upsample)
from .validation import ConfigError, InputError, split_channels


@dataclass(frozen=True)
class BlockSpec:
    """Declarative configuration of one U-block stage."""

    kind: str = "orsu"            # "orsu" | "orsu4f"
    height: int = 7               # encoder height L (orsu only)
    in_ch: int = 3
    mid_ch: int = 32
    out_ch: int = 64
    alpha: float = 0.5
    dilations: tuple = (1, 2, 4, 8)   # orsu4f only

    def __post_init__(self):
        if self.kind not in ("orsu", "orsu4f"):
            raise ConfigError(f"unknown block kind {self.kind!r}")
        if self.kind == "orsu" and self.height < 2:
            raise ConfigError("ORSU needs encoder height L >= 2")
        if min(self.in_ch, self.mid_ch, self.out_ch) <= 0:
            raise ConfigError("channel counts must be positive")
        if self.kind == "orsu4f":
            if list(self.dilations) != sorted(set(self.dilations)) or len(self.dilations) != 4:
                raise ConfigError("ORSU-4F needs 4 strictly increasing dilation rates")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must be in [0, 1), got {self.alpha}")
        # skip concatenation doubles both frequency groups; the doubled split
        # must agree with what a 2M-channel octave layer expects
        for c in (self.mid_ch, self.out_ch):
            h1, l1 = split_channels(c, self.alpha)
            h2, l2 = split_channels(2 * c, self.alpha)
            if (2 * h1, 2 * l1) != (h2, l2):
                raise ConfigError(
                    f"channel count {c} does not split consistently at alpha={self.alpha}; "
                    "use an even count per frequency group"
                )

    @property
    def divisor(self) -> int:
        """Spatial divisibility this block requires of its input."""
        if self.kind == "orsu4f":
            return 2 if self.alpha > 0 else 1
        return 2 ** self.height

    def to_dict(self) -> dict:
        return {"kind": self.kind, "height": self.height, "in_ch": self.in_ch,
                "mid_ch": self.mid_ch, "out_ch": self.out_ch, "alpha": self.alpha,
                "dilations": list(self.dilations)}

    @staticmethod
    def from_dict(d: dict) -> "BlockSpec":
        d = dict(d)
        d["dilations"] = tuple(d.get("dilations", (1, 2, 4, 8)))
        return BlockSpec(**d)


def _check_divisible(x, divisor, kind):
    h, w = x.shape[-2:]
    if h % divisor or w % divisor:
        raise InputError(
            f"{kind} input spatial dims must be divisible by {divisor}, got {h}x{w}"
        )


class ORSU(nn.Module):
    """Residual U-block of height L built from octave conv units.

    Encoder: L units with 2x max-pooling between the first L-1; the deepest
    unit uses dilation 2 at the bottom resolution.  Decoder mirrors with 2x
    upsampling and per-frequency skip concatenation.
    """

    def __init__(self, spec: BlockSpec):
        super().__init__()
        if spec.kind != "orsu":
            raise ConfigError(f"ORSU built from {spec.kind!r} spec")
        self.spec = spec
        L, m, a = spec.height, spec.mid_ch, spec.alpha
        self.conv_in = OctaveConvUnit(spec.in_ch, spec.out_ch, alpha_in=0.0, alpha_out=a)
        enc = [OctaveConvUnit(spec.out_ch, m, a, a)]
        enc += [OctaveConvUnit(m, m, a, a) for _ in range(L - 2)]
        enc.append(OctaveConvUnit(m, m, a, a, dilation=2))
        self.encoder = nn.ModuleList(enc)
        dec = [OctaveConvUnit(2 * m, m, a, a) for _ in range(L - 2)]
        dec.append(OctaveConvUnit(2 * m, spec.out_ch, a, a))
        self.decoder = nn.ModuleList(dec)

    def forward(self, x):
        _check_divisible(x, self.spec.divisor, f"ORSU-{self.spec.height}")
        f1 = self.conv_in(x)
        skips = []
        hx = f1
        for i, unit in enumerate(self.encoder[:-1]):
            hx = unit(hx)
            skips.append(hx)
            if i < len(self.encoder) - 2:
                hx = oct_max_pool(hx)
        hx = self.encoder[-1](hx)           # dilated unit, bottom resolution
        for i, unit in enumerate(self.decoder):
            hx = unit(oct_cat(hx, skips[-(i + 1)]))
            if i < len(self.decoder) - 1:
                hx = oct_upsample(hx, 2)
        return oct_merge(oct_add(f1, hx))


class ORSU4F(nn.Module):
    """Dilated residual U-block: fixed logical depth 4, no resampling.

    Receptive field grows through the dilation ladder instead; every
    internal map keeps the input resolution.
    """

    def __init__(self, spec: BlockSpec):
        super().__init__()
        if spec.kind != "orsu4f":
            raise ConfigError(f"ORSU4F built from {spec.kind!r} spec")
        self.spec = spec
        m, a, d = spec.mid_ch, spec.alpha, spec.dilations
        self.conv_in = OctaveConvUnit(spec.in_ch, spec.out_ch, alpha_in=0.0, alpha_out=a)
        self.encoder = nn.ModuleList([
            OctaveConvUnit(spec.out_ch, m, a, a, dilation=d[0]),
            OctaveConvUnit(m, m, a, a, dilation=d[1]),
            OctaveConvUnit(m, m, a, a, dilation=d[2]),
            OctaveConvUnit(m, m, a, a, dilation=d[3]),
        ])
        self.decoder = nn.ModuleList([
            OctaveConvUnit(2 * m, m, a, a, dilation=d[2]),
            OctaveConvUnit(2 * m, m, a, a, dilation=d[1]),
            OctaveConvUnit(2 * m, spec.out_ch, a, a, dilation=d[0]),
        ])

    def forward(self, x):
        _check_divisible(x, self.spec.divisor, "ORSU-4F")
        f1 = self.conv_in(x)
        hx1 = self.encoder[0](f1)
        hx2 = self.encoder[1](hx1)
        hx3 = self.encoder[2](hx2)
        hx4 = self.encoder[3](hx3)
        hx = self.decoder[0](oct_cat(hx4, hx3))
        hx = self.decoder[1](oct_cat(hx, hx2))
        hx = self.decoder[2](oct_cat(hx, hx1))
        return oct_merge(oct_add(f1, hx))


def build_block(spec: BlockSpec) -> nn.Module:
    return ORSU4F(spec) if spec.kind == "orsu4f" else ORSU(spec)

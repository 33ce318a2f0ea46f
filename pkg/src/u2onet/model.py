"""The two-level nested octave U-network.

Eleven stages form the outer U: six encoder stages separated by 2x2 max
pooling and five decoder stages, each stage filled by an ORSU block
configured per `NetworkSpec`.  Every decoder stage consumes the channel
concatenation of the upsampled previous stage and the symmetric encoder
output.  A CBAM gate sits on the last encoder stage and on every decoder
stage, and each supervised level ends in a side head (3x3 conv to one
channel, bilinear upsample to the input grid, sigmoid), giving one
probability map per level; level 1 is the test-time prediction.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import CBAM
from .blocks import BlockSpec, build_block
from .validation import ConfigError, InputError

# stage table: (kind, height, in_ch, mid_ch, out_ch)
_BASE_ENCODER = (
    ("orsu", 7, 3, 32, 64),
    ("orsu", 6, 64, 32, 128),
    ("orsu", 5, 128, 64, 256),
    ("orsu", 4, 256, 128, 512),
    ("orsu4f", 4, 512, 256, 512),
    ("orsu4f", 4, 512, 256, 512),
)
_BASE_DECODER = (            # ordered De_5 .. De_1
    ("orsu4f", 4, 1024, 256, 512),
    ("orsu", 4, 1024, 128, 256),
    ("orsu", 5, 512, 64, 128),
    ("orsu", 6, 256, 32, 64),
    ("orsu", 7, 128, 16, 64),
)
ENCODER_NAMES = ("En_1", "En_2", "En_3", "En_4", "En_5", "En_6")
DECODER_NAMES = ("De_5", "De_4", "De_3", "De_2", "De_1")
DEFAULT_ATTENTION = ("En_6",) + DECODER_NAMES

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    """Declarative description of the 11-stage network."""

    encoder: tuple = ()            # 6 BlockSpecs, En_1..En_6
    decoder: tuple = ()            # 5 BlockSpecs, De_5..De_1
    in_channels: int = 3
    alpha: float = 0.5
    attention: tuple = DEFAULT_ATTENTION
    h_levels: int = 6

    def __post_init__(self):
        if len(self.encoder) != 6 or len(self.decoder) != 5:
            raise ConfigError("network needs 6 encoder and 5 decoder stages")
        if not 1 <= self.h_levels <= 6:
            raise ConfigError("side-output count must be in [1, 6]")
        if self.encoder[0].in_ch != self.in_channels:
            raise ConfigError("En_1 input channels disagree with the network input")
        bad = set(self.attention) - set(ENCODER_NAMES + DECODER_NAMES)
        if bad:
            raise ConfigError(f"unknown attention attach points {sorted(bad)}")
        # decoder stage k consumes the previous stage concatenated with the
        # symmetric encoder output
        prev = self.encoder[5].out_ch
        for i, spec in enumerate(self.decoder):
            skip = self.encoder[4 - i].out_ch
            if spec.in_ch != prev + skip:
                raise ConfigError(
                    f"{DECODER_NAMES[i]} expects in_ch {prev + skip} "
                    f"(= {prev} previous + {skip} skip), got {spec.in_ch}"
                )
            prev = spec.out_ch

    @property
    def stages(self) -> dict:
        table = dict(zip(ENCODER_NAMES, self.encoder))
        table.update(zip(DECODER_NAMES, self.decoder))
        return table

    def required_divisor(self) -> int:
        """Exact spatial divisibility the input map must satisfy."""
        div = 1
        for depth, spec in enumerate(self.encoder):
            div = max(div, 2 ** depth * spec.divisor)
        for i, spec in enumerate(self.decoder):
            div = max(div, 2 ** (4 - i) * spec.divisor)
        return div

    def to_dict(self) -> dict:
        return {
            "encoder": [s.to_dict() for s in self.encoder],
            "decoder": [s.to_dict() for s in self.decoder],
            "in_channels": self.in_channels,
            "alpha": self.alpha,
            "attention": list(self.attention),
            "h_levels": self.h_levels,
        }

    @staticmethod
    def from_dict(d: dict) -> "NetworkSpec":
        return NetworkSpec(
            encoder=tuple(BlockSpec.from_dict(s) for s in d["encoder"]),
            decoder=tuple(BlockSpec.from_dict(s) for s in d["decoder"]),
            in_channels=d.get("in_channels", 3),
            alpha=d.get("alpha", 0.5),
            attention=tuple(d.get("attention", DEFAULT_ATTENTION)),
            h_levels=d.get("h_levels", 6),
        )


def default_network_spec(in_channels=3, alpha=0.5, h_levels=6, attention=True,
                         height_offset=0, channel_div=1) -> NetworkSpec:
    """The reference stage table, optionally shrunk for desk-scale runs.

    `height_offset` lowers every ORSU height (floor 2) and `channel_div`
    divides every mid/out channel count; `in_channels` replaces the En_1
    input width (3 for the image-only preset, 7 for the motion preset).
    """

    def scale(table, first_in=None):
        out = []
        for i, (kind, height, cin, mid, cout) in enumerate(table):
            if kind == "orsu":
                height = max(2, height + height_offset)
            mid, cout = mid // channel_div, cout // channel_div
            if i == 0 and first_in is not None:
                cin = first_in
            else:
                cin = cin // channel_div
            out.append(BlockSpec(kind, height, cin, mid, cout, alpha))
        return tuple(out)

    enc = scale(_BASE_ENCODER, first_in=in_channels)
    dec = scale(_BASE_DECODER)
    attach = DEFAULT_ATTENTION if attention is True else (attention or ())
    return NetworkSpec(enc, dec, in_channels, alpha, tuple(attach), h_levels)


class U2ONet(nn.Module):
    """Nested octave U-network emitting one sigmoid side map per level."""

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        self.encoders = nn.ModuleList(build_block(s) for s in spec.encoder)
        self.decoders = nn.ModuleList(build_block(s) for s in spec.decoder)
        attn = {}
        for name in spec.attention:
            channels = spec.stages[name].out_ch
            attn[name] = CBAM(channels)
        self.attention = nn.ModuleDict(attn)
        # side head h reads De_h for h<=5 and En_6 for h=6
        heads = []
        for level in range(1, spec.h_levels + 1):
            src = spec.decoder[5 - level] if level <= 5 else spec.encoder[5]
            heads.append(nn.Conv2d(src.out_ch, 1, 3, padding=1))
        self.side_heads = nn.ModuleList(heads)
        self.apply(_init_he)

    def _attend(self, name, x):
        if name in self.attention:
            return self.attention[name](x)
        return x

    def forward(self, x) -> list:
        """Return `h_levels` probability maps, each (N, 1, H, W) in [0, 1]."""
        if x.shape[1] != self.spec.in_channels:
            raise ConfigError(
                f"network built for {self.spec.in_channels} input channels, got {x.shape[1]}"
            )
        divisor = self.spec.required_divisor()
        h, w = x.shape[-2:]
        if h % divisor or w % divisor:
            raise InputError(
                f"input spatial dims must be divisible by {divisor}, got {h}x{w}"
            )

        skips = []
        hx = x
        for i, stage in enumerate(self.encoders):
            hx = stage(hx)
            hx = self._attend(ENCODER_NAMES[i], hx)
            skips.append(hx)
            if i < 5:
                hx = F.max_pool2d(hx, 2, stride=2)

        outputs = {"En_6": skips[5]}
        hx = skips[5]
        for i, stage in enumerate(self.decoders):
            skip = skips[4 - i]
            hx = F.interpolate(hx, size=skip.shape[-2:], mode="bilinear", align_corners=False)
            hx = stage(torch.cat([hx, skip], dim=1))
            hx = self._attend(DECODER_NAMES[i], hx)
            outputs[DECODER_NAMES[i]] = hx

        side_maps = []
        for level, head in enumerate(self.side_heads, start=1):
            src = outputs[f"De_{level}"] if level <= 5 else outputs["En_6"]
            logits = head(src)
            if logits.shape[-2:] != (h, w):
                logits = F.interpolate(logits, size=(h, w), mode="bilinear", align_corners=False)
            side_maps.append(torch.sigmoid(logits))
        return side_maps


def _init_he(module):
    if isinstance(module, nn.Conv2d):
        nn.init.kaiming_normal_(module.weight, nonlinearity="relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def final_prediction(side_maps: list) -> torch.Tensor:
    """The level-1 side output is the segmentation result at test time."""
    return side_maps[0]


def binarize(prob_map, threshold: float = 0.5):
    """Pixelwise prob >= threshold -> 1 else 0 (ties count as foreground)."""
    if isinstance(prob_map, torch.Tensor):
        return (prob_map >= threshold).to(torch.uint8)
    import numpy as np

    return (np.asarray(prob_map) >= threshold).astype(np.uint8)


def save_checkpoint(path, model: U2ONet, optimizer=None, epoch: int = 0, extra: dict = None):
    """Flat name->tensor parameter map with shape metadata and a versioned header."""
    state = model.state_dict()
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "network_spec": model.spec.to_dict(),
        "params": state,
        "shapes": {k: tuple(v.shape) for k, v in state.items()},
        "epoch": epoch,
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "torch_rng": torch.get_rng_state(),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path, map_location="cpu"):
    """Rebuild the model from a checkpoint; returns (model, payload)."""
    payload = torch.load(path, map_location=map_location, weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint format version {version!r}")
    spec = NetworkSpec.from_dict(payload["network_spec"])
    model = U2ONet(spec)
    model.load_state_dict(payload["params"])
    model.eval()
    return model, payload

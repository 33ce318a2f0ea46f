"""Input assembly, optical-flow handling and desk-scale synthetic scenes.

Network input is the channelwise concatenation of the RGB frame, the
colour-encoded optical flow and the binary union of the instance masks
(7 channels, the motion preset), or the bare RGB frame (image preset).
Flow colour encoding maps direction to hue and percentile-normalized
magnitude to value, so a motionless frame encodes to zeros.  Synthetic
sequences move analytic sprites over a textured background, which makes
their ground-truth flow and masks exact by construction.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from PIL import Image

from .postprocess import InstanceMask
from .validation import InputError

FLO_MAGIC = 202021.25


@dataclass
class FrameSample:
    """One video frame with its auxiliary inputs and ground truth."""

    rgb: np.ndarray                    # (H, W, 3) float in [0, 1]
    flow: Optional[np.ndarray]         # (H, W, 2) pixels/frame; None on terminal frames
    instance_masks: list = field(default_factory=list)   # list[InstanceMask]
    gt_masks: list = field(default_factory=list)         # list of bool (H, W) moving objects
    sequence: str = "seq"
    index: int = 0

    @property
    def gt_foreground(self) -> np.ndarray:
        fg = np.zeros(self.rgb.shape[:2], dtype=bool)
        for m in self.gt_masks:
            fg |= m
        return fg


def read_flo(path) -> np.ndarray:
    """Middlebury .flo: float32 magic, int32 width/height, interleaved u,v."""
    with open(path, "rb") as fh:
        magic = struct.unpack("<f", fh.read(4))[0]
        if abs(magic - FLO_MAGIC) > 1e-3:
            raise InputError(f"{path}: bad .flo magic {magic}")
        w, h = struct.unpack("<ii", fh.read(8))
        data = np.frombuffer(fh.read(w * h * 2 * 4), dtype="<f4")
    return data.reshape(h, w, 2).astype(np.float32)


def write_flo(path, flow: np.ndarray) -> None:
    flow = np.asarray(flow, dtype=np.float32)
    h, w, c = flow.shape
    if c != 2:
        raise InputError("flow field must have 2 channels (u, v)")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", w, h))
        fh.write(flow.astype("<f4").tobytes())


def _hsv_to_rgb(h, s, v):
    """Vectorized HSV->RGB, all arrays in [0, 1]."""
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    out = np.zeros(h.shape + (3,), dtype=np.float64)
    for idx, channels in enumerate([(v, t, p), (q, v, p), (p, v, t),
                                    (p, q, v), (t, p, v), (v, p, q)]):
        m = i == idx
        for c in range(3):
            out[..., c][m] = channels[c][m]
    return out


def normalize_flow(flow: np.ndarray, percentile: float = 99.0,
                   floor: float = 1e-6) -> np.ndarray:
    """Colour-encode a flow field: hue = direction, value = magnitude
    normalized by the per-frame percentile magnitude, clamped to [0, 1]."""
    flow = np.asarray(flow, dtype=np.float64)
    u, v = flow[..., 0], flow[..., 1]
    mag = np.hypot(u, v)
    scale = max(float(np.percentile(mag, percentile)), floor)
    value = np.clip(mag / scale, 0.0, 1.0)
    hue = (np.arctan2(v, u) / (2.0 * np.pi)) % 1.0
    sat = np.ones_like(hue)
    return _hsv_to_rgb(hue, sat, value).astype(np.float32)


def instance_union(masks: list, shape) -> np.ndarray:
    union = np.zeros(shape, dtype=bool)
    for m in masks:
        union |= m.mask
    return union


def pad_to_divisor(array: np.ndarray, divisor: int):
    """Reflect-pad (H, W, C) to the next divisor multiple; returns
    (padded, (pad_bottom, pad_right)) so the padding can be undone."""
    h, w = array.shape[:2]
    ph = (-h) % divisor
    pw = (-w) % divisor
    if ph or pw:
        widths = [(0, ph), (0, pw)] + [(0, 0)] * (array.ndim - 2)
        array = np.pad(array, widths, mode="reflect")
    return array, (ph, pw)


def unpad(array: np.ndarray, padding) -> np.ndarray:
    ph, pw = padding
    h = array.shape[-2] - ph
    w = array.shape[-1] - pw
    return array[..., :h, :w]


def assemble_input(sample: FrameSample, preset: str = "motion", divisor: int = 1,
                   flow_encoding: str = "color"):
    """Build the network input tensor (C, H, W); returns (tensor, padding).

    Channel order is fixed: rgb(3) | flow(3 colour or 2 raw) | instance
    union(1) for the motion preset, rgb(3) alone for the image preset.
    """
    if preset not in ("motion", "image"):
        raise InputError(f"unknown preset {preset!r}")
    planes = [np.asarray(sample.rgb, dtype=np.float32)]
    if preset == "motion":
        flow = sample.flow
        if flow is None:
            flow = np.zeros(sample.rgb.shape[:2] + (2,), dtype=np.float32)
        if flow_encoding == "color":
            planes.append(normalize_flow(flow))
        elif flow_encoding == "raw":
            mag = np.hypot(flow[..., 0], flow[..., 1])
            scale = max(float(np.percentile(mag, 99.0)), 1e-6)
            planes.append((flow / scale).astype(np.float32))
        else:
            raise InputError(f"unknown flow encoding {flow_encoding!r}")
        planes.append(instance_union(sample.instance_masks,
                                     sample.rgb.shape[:2])[..., None].astype(np.float32))
    stacked = np.concatenate(planes, axis=-1)
    stacked, padding = pad_to_divisor(stacked, divisor)
    return torch.from_numpy(np.ascontiguousarray(stacked.transpose(2, 0, 1))), padding


def input_channels(preset: str, flow_encoding: str = "color") -> int:
    if preset == "image":
        return 3
    return 3 + (3 if flow_encoding == "color" else 2) + 1


# --- synthetic scenes ------------------------------------------------------

@dataclass
class SpriteSpec:
    shape: str = "circle"             # "circle" | "rect"
    size: float = 8.0                 # radius or half side
    start: tuple = (16.0, 16.0)       # (row, col) center at frame 0
    velocity: tuple = (2.0, 1.0)      # (drow, dcol) per frame
    color: tuple = (0.9, 0.2, 0.2)
    labeled: bool = True              # appears in the instance masks
    moving: bool = True               # belongs to the moving-object ground truth


@dataclass
class SyntheticConfig:
    height: int = 64
    width: int = 64
    n_frames: int = 8
    sprites: tuple = (SpriteSpec(),)
    sequence: str = "syn321"
    background_smoothness: int = 8


def _sprite_mask(spec: SpriteSpec, frame: int, h: int, w: int) -> np.ndarray:
    r0 = spec.start[0] + frame * spec.velocity[0]
    c0 = spec.start[1] + frame * spec.velocity[1]
    rr, cc = np.mgrid[0:h, 0:w]
    if spec.shape == "circle":
        return (rr - r0) ** 2 + (cc - c0) ** 2 <= spec.size ** 2
    if spec.shape == "rect":
        return (np.abs(rr - r0) <= spec.size) & (np.abs(cc - c0) <= spec.size)
    raise InputError(f"unknown sprite shape {spec.shape!r}")


def _background(cfg: SyntheticConfig, rng) -> np.ndarray:
    s = cfg.background_smoothness
    coarse = rng.uniform(0.2, 0.8, size=(cfg.height // s + 2, cfg.width // s + 2, 3))
    up = np.kron(coarse, np.ones((s, s, 1)))
    return up[: cfg.height, : cfg.width].astype(np.float32)


def generate_synthetic(cfg: SyntheticConfig, seed: int = 0) -> list:
    """Deterministic sprite sequence with exact flow and pixel-exact masks.

    Later sprites draw over earlier ones; the flow at a pixel is the
    displacement of the sprite visible there (zero on background).
    """
    rng = np.random.default_rng(seed)
    bg = _background(cfg, rng)
    samples = []
    for f in range(cfg.n_frames):
        rgb = bg.copy()
        flow = np.zeros((cfg.height, cfg.width, 2), dtype=np.float32)
        instance_masks, gt_masks = [], []
        for k, spec in enumerate(cfg.sprites):
            mask = _sprite_mask(spec, f, cfg.height, cfg.width)
            rgb[mask] = spec.color
            flow[mask] = (spec.velocity[1], spec.velocity[0])      # (u, v) = (dcol, drow)
            if spec.labeled:
                instance_masks.append(InstanceMask(mask=mask, label=k + 1,
                                                   instance_id=k + 1))
            if spec.moving:
                gt_masks.append(mask)
        terminal = f == cfg.n_frames - 1
        samples.append(FrameSample(rgb=rgb, flow=None if terminal else flow,
                                   instance_masks=instance_masks, gt_masks=gt_masks,
                                   sequence=cfg.sequence, index=f))
    return samples


# --- dataset directories ----------------------------------------------------

def save_sequence(root, samples: list) -> None:
    """Write a sequence in the on-disk layout: JPEGImages/<seq>/%05d.png
    (lossless; the loader also reads DAVIS-style .jpg frames),
    Flow/<seq>/%05d.flo, Instances/<seq>/%05d.png, Annotations/<seq>/%05d.png."""
    root = Path(root)
    seq = samples[0].sequence
    for sub in ("JPEGImages", "Flow", "Instances", "Annotations"):
        (root / sub / seq).mkdir(parents=True, exist_ok=True)
    for s in samples:
        stem = f"{s.index:05d}"
        img = Image.fromarray((np.clip(s.rgb, 0, 1) * 255).astype(np.uint8))
        img.save(root / "JPEGImages" / seq / f"{stem}.png")
        if s.flow is not None:
            write_flo(root / "Flow" / seq / f"{stem}.flo", s.flow)
        _save_indexed(root / "Instances" / seq / f"{stem}.png",
                      [(m.instance_id, m.mask) for m in s.instance_masks],
                      s.rgb.shape[:2])
        _save_indexed(root / "Annotations" / seq / f"{stem}.png",
                      list(enumerate(s.gt_masks, start=1)), s.rgb.shape[:2])


def _save_indexed(path, id_masks, shape):
    canvas = np.zeros(shape, dtype=np.uint8)
    for k, mask in id_masks:
        canvas[mask] = k
    Image.fromarray(canvas, mode="L").save(path)


def load_sequence(root, seq: str) -> list:
    root = Path(root)
    frames_dir = root / "JPEGImages" / seq
    if not frames_dir.is_dir():
        raise InputError(f"no such sequence directory: {frames_dir}")
    samples = []
    for frame_path in sorted(frames_dir.glob("*.jpg")) + sorted(frames_dir.glob("*.png")):
        stem = frame_path.stem
        rgb = np.asarray(Image.open(frame_path).convert("RGB"), dtype=np.float32) / 255.0
        flow_path = root / "Flow" / seq / f"{stem}.flo"
        flow = read_flo(flow_path) if flow_path.exists() else None
        instances = _load_indexed(root / "Instances" / seq / f"{stem}.png")
        gt = _load_indexed(root / "Annotations" / seq / f"{stem}.png")
        samples.append(FrameSample(
            rgb=rgb, flow=flow,
            instance_masks=[InstanceMask(mask=m, label=k, instance_id=k)
                            for k, m in instances],
            gt_masks=[m for _, m in gt],
            sequence=seq, index=int(stem)))
    return samples


def _load_indexed(path):
    if not Path(path).exists():
        return []
    arr = np.array(Image.open(path))
    if arr.ndim == 3:
        arr = arr[..., 0]
    return [(int(k), arr == k) for k in np.unique(arr) if k != 0]


def list_sequences(root) -> list:
    frames = Path(root) / "JPEGImages"
    if not frames.is_dir():
        raise InputError(f"no JPEGImages directory under {root}")
    return sorted(p.name for p in frames.iterdir() if p.is_dir())

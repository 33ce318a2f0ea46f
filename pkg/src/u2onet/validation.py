"""Input-validation helpers shared across the package.

Two error families are distinguished everywhere: `ConfigError` for
inconsistent layer/network configuration (caller built something wrong)
and `InputError` for data that violates an operation's precondition
(bad tensor shape, odd spatial dims at an octave boundary, ...).
"""

import numpy as np
import torch


class ConfigError(ValueError):
    """Inconsistent configuration (channel splits, specs, weights)."""


class InputError(ValueError):
    """Input data violates an operation's precondition."""


def split_channels(channels: int, alpha: float) -> tuple[int, int]:
    """Partition `channels` into (high, low) counts with low = round(alpha * channels)."""
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"alpha must be in [0, 1), got {alpha}")
    low = int(round(alpha * channels))
    return channels - low, low


def check_even_spatial(x: torch.Tensor, what: str = "input") -> None:
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise InputError(
            f"{what} spatial dims must be even at an octave boundary, got {h}x{w}"
        )


def check_divisible(h: int, w: int, divisor: int, what: str = "input") -> None:
    if h % divisor or w % divisor:
        raise InputError(
            f"{what} spatial dims must be divisible by {divisor}, got {h}x{w}"
        )


def check_same_shape(a, b, what: str = "inputs") -> None:
    if tuple(a.shape) != tuple(b.shape):
        raise InputError(f"{what} must have equal shapes, got {tuple(a.shape)} vs {tuple(b.shape)}")


def check_binary(arr: np.ndarray, what: str = "map") -> np.ndarray:
    """Return `arr` as a boolean array, rejecting non-binary values."""
    arr = np.asarray(arr)
    if arr.dtype == bool:
        return arr
    values = np.unique(arr)
    if not np.isin(values, (0, 1)).all():
        raise InputError(f"{what} must be strictly binary, found values {values[:8]}")
    return arr.astype(bool)

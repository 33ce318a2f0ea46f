"""Hierarchical supervision losses.

Each supervised level contributes a binary cross-entropy term
-sum[G log S + (1-G) log(1-S)] and a KL term sum[G log(G/S)] against the
ground truth; the training loss is the weighted sum over levels 1..H.
Written as pixel sums; the default reduction is the per-pixel mean
(identical up to the constant pixel count, stable across image sizes),
with reduction="sum" giving the literal summed value.
"""

from dataclasses import dataclass

import torch

from .validation import ConfigError, InputError, check_same_shape


@dataclass(frozen=True)
class LossConfig:
    h_levels: int = 6
    w_bce: tuple | float = 1.0        # scalar or per-level weights
    w_kl: tuple | float = 1.0
    eps: float = 1e-7
    reduction: str = "mean"           # "mean" | "sum"
    pairwise_kl: bool = False         # level-vs-level matching instead of GT-anchored

    def __post_init__(self):
        if not 1 <= self.h_levels <= 6:
            raise ConfigError("h_levels must be in [1, 6]")
        if not 0.0 < self.eps <= 1e-3:
            raise ConfigError("eps must be in (0, 1e-3]")
        if self.reduction not in ("mean", "sum"):
            raise ConfigError(f"unknown reduction {self.reduction!r}")
        for w in (*_as_weights(self.w_bce, self.h_levels),
                  *_as_weights(self.w_kl, self.h_levels)):
            if w < 0:
                raise ConfigError("loss weights must be non-negative")


def _as_weights(w, h_levels):
    if isinstance(w, (int, float)):
        return (float(w),) * h_levels
    if len(w) < h_levels:
        raise ConfigError(f"need {h_levels} per-level weights, got {len(w)}")
    return tuple(float(v) for v in w)


def _reduce(x, reduction):
    return x.mean() if reduction == "mean" else x.sum()


def bce_loss(gt, pred, eps: float = 1e-7, reduction: str = "sum"):
    """Binary cross-entropy summed (or averaged) over every pixel.

    `pred` is clamped to [eps, 1-eps] before the logs; `gt` is binary.
    """
    check_same_shape(gt, pred, "ground truth and prediction")
    s = pred.clamp(eps, 1.0 - eps)
    g = gt.to(s.dtype)
    return _reduce(-(g * s.log() + (1.0 - g) * (1.0 - s).log()), reduction)


def kl_loss(gt, pred, eps: float = 1e-7, reduction: str = "sum"):
    """sum G log(G/S) with the 0*log(0) = 0 convention.

    For binary ground truth this is -sum(log S) over foreground pixels,
    so bce - kl = -sum(log(1-S)) over background pixels >= 0.
    """
    check_same_shape(gt, pred, "ground truth and prediction")
    s = pred.clamp(eps, 1.0 - eps)
    g = gt.to(s.dtype)
    return _reduce(torch.xlogy(g, g) - torch.xlogy(g, s), reduction)


def _bernoulli_kl(p, q, eps):
    p = p.clamp(eps, 1.0 - eps)
    q = q.clamp(eps, 1.0 - eps)
    return p * (p.log() - q.log()) + (1.0 - p) * ((1.0 - p).log() - (1.0 - q).log())


def total_loss(side_maps, gt, cfg: LossConfig = LossConfig()):
    """Weighted hierarchical loss over levels 1..h_levels.

    Returns (scalar, breakdown) where breakdown is one dict per level
    with keys level/bce/kl for structured logging.
    """
    if len(side_maps) < cfg.h_levels:
        raise InputError(
            f"loss over {cfg.h_levels} levels needs that many side outputs, got {len(side_maps)}"
        )
    w_bce = _as_weights(cfg.w_bce, cfg.h_levels)
    w_kl = _as_weights(cfg.w_kl, cfg.h_levels)
    total = side_maps[0].sum() * 0.0
    breakdown = []
    for h in range(cfg.h_levels):
        b = bce_loss(gt, side_maps[h], cfg.eps, cfg.reduction)
        if cfg.pairwise_kl:
            k = _pairwise_kl_level(side_maps, h, cfg)
        else:
            k = kl_loss(gt, side_maps[h], cfg.eps, cfg.reduction)
        total = total + w_bce[h] * b + w_kl[h] * k
        breakdown.append({"level": h + 1, "bce": float(b.detach()), "kl": float(k.detach())})
    return total, breakdown


def _pairwise_kl_level(side_maps, h, cfg):
    # optional reading of the matching loss: level h against every other
    # supervised level, averaged; zero when all levels agree
    others = [j for j in range(cfg.h_levels) if j != h]
    if not others:
        return side_maps[h].sum() * 0.0
    terms = [_reduce(_bernoulli_kl(side_maps[h], side_maps[j], cfg.eps), cfg.reduction)
             for j in others]
    return sum(terms) / len(terms)

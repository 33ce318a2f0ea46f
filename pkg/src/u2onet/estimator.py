"""Estimator-style front end: fit on frame samples, predict instance masks.

`MovingInstanceSegmenter` follows the scikit-learn contract: constructor
arguments are stored verbatim as hyperparameters (so `get_params`,
`set_params` and `clone` work), fitted state lives in trailing-underscore
attributes, and `fit` returns self.  Training is plain SGD over the
hierarchical supervision loss; prediction runs the network, binarizes the
level-1 map and applies the contour/instance post-processing.
"""

import math

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import assemble_input, input_channels, unpad
from .losses import LossConfig, total_loss
from .metrics import binary_prf_iou
from .model import (U2ONet, binarize, default_network_spec, final_prediction,
                    load_checkpoint, save_checkpoint)
from .postprocess import run_postprocess
from .validation import InputError


class MovingInstanceSegmenter(BaseEstimator):
    """Moving-instance segmentation with a nested octave U-network.

    Parameters mirror the pipeline defaults: SGD with lr 4e-2, momentum
    0.9, weight decay 1e-4, 20 epochs, batch size 4; `loss` picks BCE-only
    ("b") or BCE+KL ("bk") supervision over `loss_levels` side outputs.
    `height_offset`/`channel_div` shrink the stage table for desk-scale
    runs (e.g. -2 and 4 for the halved network).
    """

    def __init__(self, preset="motion", alpha=0.5, h_levels=6, attention=True,
                 height_offset=0, channel_div=1, flow_encoding="color",
                 network_spec=None, loss="bk", loss_levels=None, w_bce=1.0, w_kl=1.0,
                 loss_reduction="mean", pairwise_kl=False,
                 lr=4e-2, momentum=0.9, weight_decay=1e-4,
                 epochs=20, batch_size=4, max_steps=None,
                 early_stop_iou=None, eval_every=25, seed=0,
                 threshold=0.5, contour_min_length=200, overlap=0.8,
                 device="cpu"):
        self.preset = preset
        self.network_spec = network_spec
        self.alpha = alpha
        self.h_levels = h_levels
        self.attention = attention
        self.height_offset = height_offset
        self.channel_div = channel_div
        self.flow_encoding = flow_encoding
        self.loss = loss
        self.loss_levels = loss_levels
        self.w_bce = w_bce
        self.w_kl = w_kl
        self.loss_reduction = loss_reduction
        self.pairwise_kl = pairwise_kl
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.max_steps = max_steps
        self.early_stop_iou = early_stop_iou
        self.eval_every = eval_every
        self.seed = seed
        self.threshold = threshold
        self.contour_min_length = contour_min_length
        self.overlap = overlap
        self.device = device

    # -- construction ------------------------------------------------------

    def _build_spec(self):
        if self.network_spec is not None:
            from .model import NetworkSpec

            return NetworkSpec.from_dict(self.network_spec)
        return default_network_spec(
            in_channels=input_channels(self.preset, self.flow_encoding),
            alpha=self.alpha, h_levels=self.h_levels, attention=self.attention,
            height_offset=self.height_offset, channel_div=self.channel_div)

    def _loss_config(self):
        levels = self.loss_levels or self.h_levels
        w_kl = 0.0 if self.loss == "b" else self.w_kl
        return LossConfig(h_levels=levels, w_bce=self.w_bce, w_kl=w_kl,
                          reduction=self.loss_reduction, pairwise_kl=self.pairwise_kl)

    def _stack(self, samples):
        divisor = self.spec_.required_divisor()
        inputs, targets, paddings = [], [], []
        for s in samples:
            x, pad = assemble_input(s, self.preset, divisor, self.flow_encoding)
            g, _ = _pad_target(s.gt_foreground, divisor)
            inputs.append(x)
            targets.append(g)
            paddings.append(pad)
        shapes = {tuple(t.shape) for t in inputs}
        if len(shapes) > 1:
            raise InputError(f"samples must share one resolution per fit/predict call, got {shapes}")
        return torch.stack(inputs), torch.stack(targets), paddings

    # -- training ------------------------------------------------------------

    def fit(self, X, y=None, checkpoint_dir=None, resume_from=None, log_fn=None):
        """Train on a list of FrameSample (ground truth travels inside X)."""
        if not X:
            raise InputError("fit needs at least one sample")
        torch.manual_seed(self.seed)
        start_epoch = 0
        if resume_from is not None:
            model, payload = load_checkpoint(resume_from)
            from .model import NetworkSpec

            self.spec_ = NetworkSpec.from_dict(payload["network_spec"])
            self.model_ = model
            self.history_ = list(payload["extra"].get("history", []))
            start_epoch = payload["epoch"]
        else:
            self.spec_ = self._build_spec()
            self.model_ = U2ONet(self.spec_)
            self.history_ = []
        self.model_.to(self.device)

        inputs, targets, _ = self._stack(X)
        inputs = inputs.to(self.device)
        targets = targets.to(self.device)
        cfg = self._loss_config()
        opt = torch.optim.SGD(self.model_.parameters(), lr=self.lr,
                              momentum=self.momentum, weight_decay=self.weight_decay)
        if resume_from is not None and payload.get("optimizer") is not None:
            opt.load_state_dict(payload["optimizer"])
            torch.set_rng_state(payload["torch_rng"])

        n = len(X)
        step = len(self.history_)
        stop = False
        self.model_.train()
        for epoch in range(start_epoch, self.epochs):
            order = torch.randperm(n)
            for lo in range(0, n, self.batch_size):
                idx = order[lo: lo + self.batch_size]
                opt.zero_grad()
                outs = self.model_(inputs[idx])
                loss, breakdown = total_loss(outs, targets[idx], cfg)
                loss.backward()
                opt.step()
                step += 1
                record = {"step": step, "epoch": epoch + 1,
                          "total": float(loss.detach()), "levels": breakdown}
                self.history_.append(record)
                if log_fn is not None:
                    for lvl in breakdown:
                        log_fn(f"step={step} epoch={epoch + 1} level={lvl['level']} "
                               f"bce={lvl['bce']:.6f} kl={lvl['kl']:.6f} "
                               f"total={record['total']:.6f}")
                if not math.isfinite(record["total"]):
                    raise RuntimeError(f"training diverged at step {step} (non-finite loss)")
                if self.early_stop_iou is not None and step % self.eval_every == 0:
                    if self._train_iou(X) > self.early_stop_iou:
                        stop = True
                        break
                if self.max_steps is not None and step >= self.max_steps:
                    stop = True
                    break
            if checkpoint_dir is not None:
                self.save(f"{checkpoint_dir}/epoch_{epoch + 1:04d}.ckpt",
                          optimizer=opt, epoch=epoch + 1)
            if stop:
                break
        self.n_steps_ = step
        self.model_.eval()
        return self

    def _train_iou(self, samples) -> float:
        iou = [binary_prf_iou(p, s.gt_foreground).iou
               for p, s in zip(self.predict_foreground(samples), samples)]
        self.model_.train()
        return float(np.mean(iou))

    # -- inference -----------------------------------------------------------

    def predict_proba(self, X) -> list:
        """Level-1 probability map per sample, cropped back to input size."""
        check_is_fitted(self, "model_")
        self.model_.eval()
        maps = []
        with torch.no_grad():
            for s in X:
                x, pad = assemble_input(s, self.preset, self.spec_.required_divisor(),
                                        self.flow_encoding)
                outs = self.model_(x[None].to(self.device))
                prob = final_prediction(outs)[0, 0].cpu().numpy()
                maps.append(unpad(prob, pad))
        return maps

    def predict_foreground(self, X) -> list:
        """Binary motion map per sample."""
        return [binarize(p, self.threshold).astype(bool) for p in self.predict_proba(X)]

    def predict(self, X) -> list:
        """MovingInstanceResult per sample (contours + instance association)."""
        results = []
        for s, fg in zip(X, self.predict_foreground(X)):
            results.append(run_postprocess(fg, s.instance_masks,
                                           self.contour_min_length, self.overlap))
        return results

    def score(self, X, y=None) -> float:
        """Mean foreground IoU against the samples' own ground truth."""
        ious = [binary_prf_iou(fg, s.gt_foreground).iou
                for fg, s in zip(self.predict_foreground(X), X)]
        return float(np.mean(ious))

    # -- persistence -----------------------------------------------------------

    def save(self, path, optimizer=None, epoch=0):
        check_is_fitted(self, "model_")
        save_checkpoint(path, self.model_, optimizer=optimizer, epoch=epoch,
                        extra={"history": self.history_,
                               "params": {k: v for k, v in self.get_params().items()
                                          if isinstance(v, (int, float, str, bool, type(None)))}})

    def load(self, path):
        """Attach a trained network from a checkpoint; returns self."""
        model, payload = load_checkpoint(path, map_location=self.device)
        self.model_ = model
        from .model import NetworkSpec

        self.spec_ = NetworkSpec.from_dict(payload["network_spec"])
        self.history_ = list(payload["extra"].get("history", []))
        self.n_steps_ = len(self.history_)
        return self


def _pad_target(gt: np.ndarray, divisor: int):
    from .data import pad_to_divisor

    arr = gt.astype(np.float32)[..., None]
    padded, padding = pad_to_divisor(arr, divisor)
    return torch.from_numpy(padded.transpose(2, 0, 1)), padding

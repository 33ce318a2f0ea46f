"""Segmentation metrics: precision/recall/F-measure/IoU and the object-count
error, for the binary foreground task and the multi-object instance task.

Division-by-zero conventions (documented and tested): precision is 1 only
when neither prediction nor ground truth contains positives and 0 when
nothing is predicted against a non-empty ground truth; recall is 1
whenever the ground truth is empty; IoU is 1 when both sides are empty.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .validation import check_binary, check_same_shape


@dataclass
class FrameEval:
    precision: float
    recall: float
    f_measure: float
    iou: float
    pred_count: int = 0
    gt_count: int = 0


def _rates(tp, fp, fn) -> FrameEval:
    if tp + fp > 0:
        p = tp / (tp + fp)
    else:
        p = 1.0 if fn == 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 1.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    iou = tp / (tp + fp + fn) if tp + fp + fn > 0 else 1.0
    return FrameEval(p, r, f, iou)


def binary_prf_iou(pred: np.ndarray, gt: np.ndarray) -> FrameEval:
    """Pixelwise rates of a binary prediction against a binary ground truth."""
    pred = check_binary(pred, "prediction")
    gt = check_binary(gt, "ground truth")
    check_same_shape(pred, gt, "prediction and ground truth")
    tp = int((pred & gt).sum())
    fp = int((pred & ~gt).sum())
    fn = int((~pred & gt).sum())
    return _rates(tp, fp, fn)


def _greedy_match(pred_masks, gt_masks):
    """Greedy highest-IoU assignment; returns list of (pred_idx, gt_idx)."""
    ious = np.zeros((len(pred_masks), len(gt_masks)))
    for i, p in enumerate(pred_masks):
        for j, g in enumerate(gt_masks):
            inter = int((p & g).sum())
            union = int((p | g).sum())
            ious[i, j] = inter / union if union else 0.0
    pairs = []
    taken_p, taken_g = set(), set()
    while True:
        best = None
        for i in range(len(pred_masks)):
            if i in taken_p:
                continue
            for j in range(len(gt_masks)):
                if j in taken_g:
                    continue
                if ious[i, j] > 0 and (best is None or ious[i, j] > ious[best[0], best[1]]):
                    best = (i, j)
        if best is None:
            return pairs
        pairs.append(best)
        taken_p.add(best[0])
        taken_g.add(best[1])


def multi_object_eval(pred_masks: list, gt_masks: list) -> FrameEval:
    """Instance-aware rates: masks are matched greedily by IoU, matched
    pairs contribute pixelwise TP/FP/FN and every unmatched mask counts
    wholly as FP (prediction) or FN (ground truth)."""
    pred_masks = [check_binary(m, "prediction mask") for m in pred_masks]
    gt_masks = [check_binary(m, "ground-truth mask") for m in gt_masks]
    pairs = _greedy_match(pred_masks, gt_masks)
    tp = fp = fn = 0
    for i, j in pairs:
        p, g = pred_masks[i], gt_masks[j]
        tp += int((p & g).sum())
        fp += int((p & ~g).sum())
        fn += int((~p & g).sum())
    matched_p = {i for i, _ in pairs}
    matched_g = {j for _, j in pairs}
    fp += int(sum(m.sum() for i, m in enumerate(pred_masks) if i not in matched_p))
    fn += int(sum(m.sum() for j, m in enumerate(gt_masks) if j not in matched_g))
    ev = _rates(tp, fp, fn)
    ev.pred_count = len(pred_masks)
    ev.gt_count = len(gt_masks)
    return ev


def delta_obj(pred_counts, gt_counts) -> float:
    """Mean absolute difference between predicted and true object counts."""
    pred = np.atleast_1d(np.asarray(pred_counts, dtype=float))
    gt = np.atleast_1d(np.asarray(gt_counts, dtype=float))
    check_same_shape(pred, gt, "count sequences")
    return float(np.mean(np.abs(pred - gt)))


def aggregate(frames: list) -> FrameEval:
    """Mean of each rate over frames, with the count error attached."""
    if not frames:
        return FrameEval(1.0, 1.0, 1.0, 1.0)
    ev = FrameEval(
        precision=float(np.mean([f.precision for f in frames])),
        recall=float(np.mean([f.recall for f in frames])),
        f_measure=float(np.mean([f.f_measure for f in frames])),
        iou=float(np.mean([f.iou for f in frames])),
    )
    ev.pred_count = int(sum(f.pred_count for f in frames))
    ev.gt_count = int(sum(f.gt_count for f in frames))
    return ev


def write_metrics_csv(path, per_sequence: dict) -> None:
    """Per-sequence rows plus dataset aggregates, averaged both per frame
    and per sequence (the two common protocols).

    `per_sequence` maps sequence id -> list[FrameEval].
    """
    rows = []
    all_frames = []
    seq_aggs = []
    for seq in sorted(per_sequence):
        frames = per_sequence[seq]
        agg = aggregate(frames)
        d = delta_obj([f.pred_count for f in frames], [f.gt_count for f in frames])
        rows.append((seq, agg, d))
        all_frames.extend(frames)
        seq_aggs.append((agg, d))
    frame_agg = aggregate(all_frames)
    frame_d = delta_obj([f.pred_count for f in all_frames] or [0],
                        [f.gt_count for f in all_frames] or [0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequence", "P", "R", "F", "IoU", "dObj"])
        for seq, agg, d in rows:
            writer.writerow([seq, f"{agg.precision:.4f}", f"{agg.recall:.4f}",
                             f"{agg.f_measure:.4f}", f"{agg.iou:.4f}", f"{d:.4f}"])
        writer.writerow(["ALL(frame-mean)", f"{frame_agg.precision:.4f}",
                         f"{frame_agg.recall:.4f}", f"{frame_agg.f_measure:.4f}",
                         f"{frame_agg.iou:.4f}", f"{frame_d:.4f}"])
        if seq_aggs:
            writer.writerow([
                "ALL(seq-mean)",
                f"{np.mean([a.precision for a, _ in seq_aggs]):.4f}",
                f"{np.mean([a.recall for a, _ in seq_aggs]):.4f}",
                f"{np.mean([a.f_measure for a, _ in seq_aggs]):.4f}",
                f"{np.mean([a.iou for a, _ in seq_aggs]):.4f}",
                f"{np.mean([d for _, d in seq_aggs]):.4f}",
            ])

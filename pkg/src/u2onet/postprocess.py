"""Instance-level post-processing of binary motion maps.

The motion map is decomposed into closed outer contours (border following
over 8-connected foreground, 4-connected background).  Each semantic
instance mask is associated with a contour when the contour's enclosed
region covers strictly more than an overlap fraction (default 80%) of its
pixels.  Per contour: several associated masks are emitted as-is, a single
associated mask is replaced by the contour's enclosed region (the contour
refines the mask boundary), and an unassociated contour longer than the
length threshold becomes a NEW unlabeled moving instance.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from .validation import check_binary

# clockwise Moore neighbourhood, screen coordinates (row grows downward)
_MOORE = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))


@dataclass
class MotionContour:
    """Closed outer boundary of one foreground component."""

    boundary: np.ndarray          # (K, 2) ordered (row, col) closed walk
    region: np.ndarray            # bool (H, W), enclosed area with holes filled
    length: int                   # count of distinct boundary pixels
    holes: list = field(default_factory=list)   # bool masks of interior holes


@dataclass
class InstanceMask:
    mask: np.ndarray              # bool (H, W)
    label: Optional[object] = None
    instance_id: int = 0

    @property
    def size(self) -> int:
        return int(self.mask.sum())


@dataclass
class MovingInstance:
    mask: np.ndarray
    label: Optional[object]      # None for NEW (never-before-seen) instances
    instance_id: int             # 1-based emission order
    is_new: bool = False
    source_id: Optional[int] = None


@dataclass
class MovingInstanceResult:
    instances: list

    @property
    def count(self) -> int:
        return len(self.instances)


def _trace_boundary(region: np.ndarray) -> np.ndarray:
    """Moore-neighbour border following; returns the ordered closed walk."""
    rows, cols = np.nonzero(region)
    start = (int(rows[0]), int(cols[0]))          # raster order: topmost, leftmost
    h, w = region.shape

    def fg(p):
        return 0 <= p[0] < h and 0 <= p[1] < w and region[p]

    walk = [start]
    p, back = start, (start[0], start[1] - 1)     # west of start is background
    seen_states = {(p, back)}
    while True:
        # scan the Moore ring clockwise, starting just after the backtrack
        offs = (back[0] - p[0], back[1] - p[1])
        k = _MOORE.index(offs)
        nxt, prev_bg = None, back
        for step in range(1, 9):
            cand = _MOORE[(k + step) % 8]
            cand = (p[0] + cand[0], p[1] + cand[1])
            if fg(cand):
                nxt = cand
                break
            prev_bg = cand
        if nxt is None:                           # isolated single pixel
            break
        state = (nxt, prev_bg)
        if state in seen_states:
            break
        seen_states.add(state)
        walk.append(nxt)
        p, back = nxt, prev_bg
    if len(walk) > 1 and walk[-1] == walk[0]:
        walk.pop()
    return np.asarray(walk, dtype=np.int64)


def _boundary_pixel_count(region: np.ndarray) -> int:
    """Pixels of `region` with a 4-neighbour outside it (or off the image)."""
    padded = np.pad(region, 1)
    inner = (padded[:-2, 1:-1] & padded[2:, 1:-1] &
             padded[1:-1, :-2] & padded[1:-1, 2:])
    return int((region & ~inner).sum())


def extract_contours(motion_map: np.ndarray) -> list:
    """All outer contours of the binary map, in raster order of appearance.

    Holes are recorded on each contour but only the outer boundaries take
    part in instance association.
    """
    fg = check_binary(motion_map, "motion map")
    labels, n = ndimage.label(fg, structure=np.ones((3, 3), dtype=int))
    contours = []
    order = []
    for comp_id in range(1, n + 1):
        comp = labels == comp_id
        filled = ndimage.binary_fill_holes(comp)
        hole_labels, n_holes = ndimage.label(filled & ~comp)
        holes = [hole_labels == k for k in range(1, n_holes + 1)]
        boundary = _trace_boundary(filled)
        contours.append(MotionContour(
            boundary=boundary,
            region=filled,
            length=_boundary_pixel_count(filled),
            holes=holes,
        ))
        rows, cols = np.nonzero(comp)
        order.append((int(rows[0]), int(cols[0])))
    return [c for _, c in sorted(zip(order, contours), key=lambda t: t[0])]


def associate(contour: MotionContour, masks: list, overlap: float = 0.8) -> list:
    """Masks whose pixel overlap with the enclosed region strictly exceeds
    overlap * |mask|."""
    out = []
    for m in masks:
        inside = int((contour.region & m.mask).sum())
        if inside > overlap * m.size:
            out.append(m)
    return out


def segment_instances(contours: list, masks: list, length_threshold: int = 200,
                      overlap: float = 0.8) -> MovingInstanceResult:
    """Instance-level moving-object segmentation.

    A mask overlapping several contours is attributed once, to the contour
    with the largest overlap (ties to the smaller contour index); output
    order is deterministic in (contour order, instance id).
    """
    assigned = {i: [] for i in range(len(contours))}
    for m in sorted(masks, key=lambda m: m.instance_id):
        best, best_overlap = None, 0
        for i, c in enumerate(contours):
            inside = int((c.region & m.mask).sum())
            if inside > overlap * m.size and inside > best_overlap:
                best, best_overlap = i, inside
        if best is not None:
            assigned[best].append(m)

    instances = []
    for i, c in enumerate(contours):
        group = assigned[i]
        if len(group) > 1:
            for m in group:
                instances.append(MovingInstance(
                    mask=m.mask.copy(), label=m.label,
                    instance_id=len(instances) + 1, source_id=m.instance_id))
        elif len(group) == 1:
            m = group[0]
            instances.append(MovingInstance(
                mask=c.region.copy(), label=m.label,
                instance_id=len(instances) + 1, source_id=m.instance_id))
        elif c.length > length_threshold:
            instances.append(MovingInstance(
                mask=c.region.copy(), label=None,
                instance_id=len(instances) + 1, is_new=True))
    return MovingInstanceResult(instances)


def run_postprocess(motion_map: np.ndarray, masks: list, length_threshold: int = 200,
                    overlap: float = 0.8) -> MovingInstanceResult:
    """extract_contours + segment_instances on one frame."""
    return segment_instances(extract_contours(motion_map), masks,
                             length_threshold, overlap)


# --- file interfaces ------------------------------------------------------

def load_binary_png(path) -> np.ndarray:
    return np.array(Image.open(path).convert("L")) > 0


def load_instance_png(path) -> list:
    """Indexed PNG, pixel value k > 0 is instance k (value doubles as label)."""
    arr = np.array(Image.open(path))
    return [InstanceMask(mask=arr == k, label=int(k), instance_id=int(k))
            for k in np.unique(arr) if k != 0]


def save_instance_png(path, result: MovingInstanceResult, shape=None) -> None:
    """Indexed PNG (0 background, k = instance k) plus a text manifest."""
    if shape is None:
        shape = result.instances[0].mask.shape
    canvas = np.zeros(shape, dtype=np.uint8)
    for inst in result.instances:
        canvas[inst.mask] = inst.instance_id
    img = Image.fromarray(canvas, mode="P")
    img.putpalette(_instance_palette())
    img.save(path)
    manifest = str(path) + ".manifest.txt"
    with open(manifest, "w") as fh:
        fh.write("instance_id\tlabel\tpixels\n")
        for inst in result.instances:
            label = "NEW" if inst.is_new or inst.label is None else str(inst.label)
            fh.write(f"{inst.instance_id}\t{label}\t{int(inst.mask.sum())}\n")


def _instance_palette() -> list:
    rng = np.random.default_rng(0)
    palette = [0, 0, 0]
    palette += [int(v) for v in rng.integers(32, 255, size=255 * 3)]
    return palette

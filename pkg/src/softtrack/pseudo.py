"""Association pseudo-labels from motion-aligned boxes, and occlusion masks.

Reference boxes are shifted by the motion sampled at their centers, matched
to target boxes by IoU with the Hungarian solver, and weak matches are
dropped. Stereo occlusion masks come from a left/right disparity
consistency check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .assign import hungarian
from .costs import iou_cost
from .errors import CenterOutOfField, DimensionMismatch
from .geom import BoundingBox, Detection, MotionField, nms, warp_box, warp_grid

MIN_CONF = 0.9
MIN_AREA = 100.0
NMS_IOU = 0.3
MIN_MATCH_IOU = 0.1
TAU_OCC = 1.0
MAX_OCCLUDED = 0.5


@dataclass(frozen=True)
class PseudoLabelSet:
    pairs: tuple[tuple[int, int], ...]
    discarded_low_iou: int = 0
    dropped_occluded: int = 0
    dropped_out_of_field: int = 0
    ious: tuple[float, ...] = field(default=(), compare=False)

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)


@dataclass(frozen=True, eq=False)
class OcclusionMask:
    """Binary grid, ``bits[y, x] == 1`` where the pixel is occluded."""

    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ValueError("occlusion mask must be 2-D")
        if not np.isin(b, (0, 1)).all():
            raise ValueError("occlusion mask must be binary")
        object.__setattr__(self, "bits", b.astype(np.uint8))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def __eq__(self, other):
        if not isinstance(other, OcclusionMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)


def filter_detections(
    dets: Sequence[Detection],
    min_conf: float = MIN_CONF,
    min_area: float = MIN_AREA,
    nms_iou: float = NMS_IOU,
) -> list[Detection]:
    """Drop unconfident and small detections, then suppress overlaps.

    Confidence must be strictly above ``min_conf``; area must be at least
    ``min_area`` square pixels.
    """
    kept = [d for d in dets if d.confidence > min_conf and d.box.area >= min_area]
    return nms(kept, nms_iou)


def occluded_fraction(box: BoundingBox, mask: OcclusionMask) -> float:
    """Fraction of the pixel cells touched by ``box`` that are occluded.

    Cell ``(x, y)`` spans ``[x, x+1) x [y, y+1)``. Cells outside the mask
    are ignored; a box touching no cell counts as unoccluded.
    """
    x0 = max(int(math.floor(box.x1)), 0)
    y0 = max(int(math.floor(box.y1)), 0)
    x1 = min(int(math.ceil(box.x2)), mask.width)
    y1 = min(int(math.ceil(box.y2)), mask.height)
    if x1 <= x0 or y1 <= y0:
        return 0.0
    return float(mask.bits[y0:y1, x0:x1].mean())


def drop_occluded(
    dets: Sequence[Detection], mask: OcclusionMask, max_ratio: float = MAX_OCCLUDED
) -> list[Detection]:
    if not (0.0 <= max_ratio <= 1.0):
        raise ValueError(f"max_ratio {max_ratio} outside [0, 1]")
    return [d for d in dets if occluded_fraction(d.box, mask) <= max_ratio]


def occlusion_mask(
    d_near: MotionField,
    d_far: MotionField,
    tau_occ: float = TAU_OCC,
    direction: float = 1.0,
) -> OcclusionMask:
    """Mark pixels of the far view whose disparity disagrees with the near view.

    ``d_near`` is warped into the far view with :func:`warp_grid` using
    ``direction * d_far`` as the displacement; a pixel is occluded when the
    absolute difference to ``d_far`` is at least ``tau_occ`` or the warp
    sample left the grid.
    """
    if tau_occ <= 0:
        raise ValueError("tau_occ must be positive")
    if d_near.values.shape != d_far.values.shape:
        raise DimensionMismatch(
            f"disparity shapes differ: {d_near.values.shape} vs {d_far.values.shape}"
        )
    disp = d_far if direction == 1.0 else MotionField(direction * d_far.values)
    warped = warp_grid(d_near, disp).values[:, :, 0]
    diff = np.abs(warped - d_far.values[:, :, 0])
    bits = ~np.isfinite(diff) | (diff >= tau_occ)
    return OcclusionMask(bits.astype(np.uint8))


def stereo_occlusion_masks(
    d_left: MotionField, d_right: MotionField, tau_occ: float = TAU_OCC
) -> tuple[OcclusionMask, OcclusionMask]:
    """``(OM_left, OM_right)`` for a stereo pair.

    Disparities follow the :func:`warp_grid` convention: right pixel ``x``
    sees what left pixel ``x - d_right(x)`` sees, so the left view samples
    the right one at ``x + d_left(x)``.
    """
    om_right = occlusion_mask(d_left, d_right, tau_occ)
    om_left = occlusion_mask(d_right, d_left, tau_occ, direction=-1.0)
    return om_left, om_right


def generate_pseudo_labels(
    ref: Sequence[Detection],
    tgt: Sequence[Detection],
    motion: MotionField,
    min_match_iou: float = MIN_MATCH_IOU,
    ref_mask: Optional[OcclusionMask] = None,
    tgt_mask: Optional[OcclusionMask] = None,
    max_occluded: float = MAX_OCCLUDED,
) -> PseudoLabelSet:
    """Match reference detections to target detections through ``motion``.

    Returned pairs index into the original ``ref`` and ``tgt`` lists. When
    masks are given, detections occluded beyond ``max_occluded`` are left
    out before matching. Reference boxes whose center leaves the field are
    dropped rather than raising.
    """
    ref_idx = list(range(len(ref)))
    tgt_idx = list(range(len(tgt)))
    n_occ = 0
    if ref_mask is not None:
        keep = [i for i in ref_idx if occluded_fraction(ref[i].box, ref_mask) <= max_occluded]
        n_occ += len(ref_idx) - len(keep)
        ref_idx = keep
    if tgt_mask is not None:
        keep = [j for j in tgt_idx if occluded_fraction(tgt[j].box, tgt_mask) <= max_occluded]
        n_occ += len(tgt_idx) - len(keep)
        tgt_idx = keep

    warped: list[BoundingBox] = []
    warped_idx: list[int] = []
    for i in ref_idx:
        try:
            warped.append(warp_box(ref[i].box, motion))
        except CenterOutOfField:
            continue
        warped_idx.append(i)
    n_oof = len(ref_idx) - len(warped_idx)

    if not warped or not tgt_idx:
        return PseudoLabelSet((), 0, n_occ, n_oof)

    cost = iou_cost(warped, [tgt[j].box for j in tgt_idx]).values
    pairs, ious, low = [], [], 0
    for r, c in hungarian(cost).matches:
        overlap = 1.0 - cost[r, c]
        if overlap < min_match_iou:
            low += 1
            continue
        pairs.append((warped_idx[r], tgt_idx[c]))
        ious.append(overlap)
    order = np.argsort([p[0] for p in pairs], kind="stable")
    return PseudoLabelSet(
        tuple(pairs[k] for k in order),
        low,
        n_occ,
        n_oof,
        tuple(ious[k] for k in order),
    )

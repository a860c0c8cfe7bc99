"""Bounding-box geometry: IoU, motion compensation, NMS and grid warping.

Boxes use the corner convention ``(x1, y1, x2, y2)`` in continuous pixel
coordinates. Dense grids (:class:`MotionField`) place the sample for pixel
column ``x`` / row ``y`` at the integer coordinate ``(x, y)``, so a box
center can be looked up by bilinear interpolation directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CenterOutOfField, DimensionMismatch


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2)

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=float)


@dataclass(frozen=True)
class Detection:
    """One observed object in one frame."""

    box: BoundingBox
    confidence: float = 1.0
    class_id: int = 0
    frame: int = 0
    embedding_row: Optional[int] = None

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class MotionField:
    """Dense per-pixel flow (2 channels, dx then dy) or disparity (1 channel).

    ``values`` has shape ``(height, width, channels)``.
    """

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[2] not in (1, 2):
            raise ValueError(f"motion field must be (H, W, 1|2), got {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("motion field must be non-empty")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @classmethod
    def constant(cls, width: int, height: int, value) -> "MotionField":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.broadcast_to(value, (height, width, value.size)).copy())

    def __eq__(self, other):
        if not isinstance(other, MotionField):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(
            self.values, other.values, equal_nan=True
        )


def boxes_to_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    if len(boxes) == 0:
        return np.zeros((0, 4))
    return np.array([[b.x1, b.y1, b.x2, b.y2] for b in boxes], dtype=float)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(a: Sequence[BoundingBox], b: Sequence[BoundingBox]) -> np.ndarray:
    """Pairwise IoU, shape ``(len(a), len(b))``."""
    A = boxes_to_array(a)
    B = boxes_to_array(b)
    lt = np.maximum(A[:, None, :2], B[None, :, :2])
    rb = np.minimum(A[:, None, 2:], B[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (A[:, 2] - A[:, 0]) * (A[:, 3] - A[:, 1])
    area_b = (B[:, 2] - B[:, 0]) * (B[:, 3] - B[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def bilinear_sample(grid: np.ndarray, x: float, y: float) -> np.ndarray:
    """Sample an ``(H, W, C)`` grid at continuous ``(x, y)``.

    Coordinates are clamped to ``[0, W-1] x [0, H-1]`` (edge replication).
    """
    h, w = grid.shape[:2]
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0 = min(int(math.floor(x)), max(w - 2, 0))
    y0 = min(int(math.floor(y)), max(h - 2, 0))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = (1 - fx) * grid[y0, x0] + fx * grid[y0, x1]
    bottom = (1 - fx) * grid[y1, x0] + fx * grid[y1, x1]
    return (1 - fy) * top + fy * bottom


def warp_box(b: BoundingBox, m: MotionField) -> BoundingBox:
    """Translate ``b`` by the motion sampled at its center.

    Flow fields shift by ``(dx, dy)``; disparity fields shift horizontally
    by ``-d``. The center must lie in the image extent ``[0, W] x [0, H]``.
    """
    cx, cy = b.center
    if not (0.0 <= cx <= m.width and 0.0 <= cy <= m.height):
        raise CenterOutOfField(
            f"box center ({cx}, {cy}) outside {m.width}x{m.height} field"
        )
    s = bilinear_sample(m.values, cx, cy)
    if not np.all(np.isfinite(s)):
        raise CenterOutOfField(f"invalid motion sample at ({cx}, {cy})")
    if m.channels == 2:
        dx, dy = float(s[0]), float(s[1])
    else:
        dx, dy = -float(s[0]), 0.0
    return b.translate(dx, dy)


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy non-maximum suppression.

    Survivors come back in descending confidence; equal confidence keeps
    input order.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold {iou_threshold} outside [0, 1]")
    if not dets:
        return []
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    ious = iou_matrix([d.box for d in dets], [d.box for d in dets])
    keep: list[int] = []
    suppressed = np.zeros(len(dets), dtype=bool)
    for i in order:
        if suppressed[i]:
            continue
        keep.append(i)
        suppressed |= ious[i] > iou_threshold
    return [dets[i] for i in keep]


def warp_grid(src: MotionField, disp: MotionField) -> MotionField:
    """Backward-warp a single-channel grid horizontally.

    ``out(x, y) = src(x - disp(x, y), y)`` with linear interpolation along
    the row. Samples falling outside ``[0, W-1]`` are set to NaN.
    """
    if src.channels != 1 or disp.channels != 1:
        raise DimensionMismatch("warp_grid expects single-channel grids")
    if src.values.shape != disp.values.shape:
        raise DimensionMismatch(
            f"grid shapes differ: {src.values.shape} vs {disp.values.shape}"
        )
    s = src.values[:, :, 0]
    h, w = s.shape
    xs = np.arange(w, dtype=float)[None, :] - disp.values[:, :, 0]
    valid = np.isfinite(xs) & (xs >= 0.0) & (xs <= w - 1)
    xc = np.where(valid, xs, 0.0)
    x0 = np.minimum(np.floor(xc).astype(int), max(w - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    fx = xc - x0
    rows = np.arange(h)[:, None]
    out = (1.0 - fx) * s[rows, x0] + fx * s[rows, x1]
    out = np.where(valid, out, np.nan)
    return MotionField(out[:, :, None])

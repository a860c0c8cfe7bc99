"""Cost matrices for association.

Appearance cost from cosine similarity, geometric cost from IoU, their
inference-time blend, and the dustbin augmentation that gives every
detection a "no match" option.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import AlreadyAugmented, DimensionMismatch, ZeroNormEmbedding
from .geom import BoundingBox, iou_matrix

DEFAULT_GAMMA = 0.5


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """A real cost matrix, optionally carrying a dustbin row and column.

    When ``gamma`` is set the matrix is augmented: its last row and column
    hold the dustbin value.
    """

    values: np.ndarray = field(repr=False)
    gamma: Optional[float] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError(f"cost matrix must be 2-D, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def augmented(self) -> bool:
        return self.gamma is not None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def real(self) -> np.ndarray:
        """The block of detection-to-detection costs."""
        if self.augmented:
            return self.values[:-1, :-1]
        return self.values


def _as_matrix(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :] if x.size else x.reshape(0, 0)
    if x.ndim != 2:
        raise DimensionMismatch(f"{name} must be a list of vectors")
    return x


def normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ZeroNormEmbedding("cannot normalize a zero-norm embedding")
    return x / norms


def cosine_cost(x1, x2) -> CostMatrix:
    """``C[i, j] = 1 - <x1_i / |x1_i|, x2_j / |x2_j|>``."""
    a = _as_matrix(x1, "x1")
    b = _as_matrix(x2, "x2")
    if a.shape[0] and b.shape[0] and a.shape[1] != b.shape[1]:
        raise DimensionMismatch(
            f"embedding dimensions differ: {a.shape[1]} vs {b.shape[1]}"
        )
    if a.shape[0] == 0 or b.shape[0] == 0:
        return CostMatrix(np.zeros((a.shape[0], b.shape[0])))
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("embeddings must be finite")
    c = 1.0 - normalize_rows(a) @ normalize_rows(b).T
    # rounding can push |<u, v>| a hair past 1
    return CostMatrix(np.clip(c, 0.0, 2.0))


def iou_cost(warped: Sequence[BoundingBox], targets: Sequence[BoundingBox]) -> CostMatrix:
    return CostMatrix(1.0 - iou_matrix(warped, targets))


def combine(sim: CostMatrix, iou: CostMatrix, sigma: float) -> CostMatrix:
    """Blend appearance and overlap costs: ``sigma*sim + (1-sigma)*iou``."""
    if sim.augmented or iou.augmented:
        raise ValueError("combine expects unaugmented cost matrices")
    if sim.shape != iou.shape:
        raise DimensionMismatch(f"cost shapes differ: {sim.shape} vs {iou.shape}")
    if not (0.0 <= sigma <= 1.0):
        raise ValueError(f"sigma {sigma} outside [0, 1]")
    if sigma == 1.0:
        return CostMatrix(sim.values.copy())
    if sigma == 0.0:
        return CostMatrix(iou.values.copy())
    return CostMatrix(sigma * sim.values + (1.0 - sigma) * iou.values)


def augment_dustbin(c: CostMatrix, gamma: float = DEFAULT_GAMMA) -> CostMatrix:
    if c.augmented:
        raise AlreadyAugmented("cost matrix already has a dustbin")
    n1, n2 = c.shape
    out = np.full((n1 + 1, n2 + 1), float(gamma))
    out[:n1, :n2] = c.values
    return CostMatrix(out, gamma=float(gamma))

"""Online tracker built on the soft assignment.

Each frame, live tracks are scored against new detections with a blend of
appearance (cosine) and overlap (IoU) cost. The blend is augmented with a
dustbin so that a detection can decline every track, and the augmented
problem is solved either with Sinkhorn plus :func:`~softtrack.assign.decode`
or with the exact gated Hungarian solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .assign import (
    DEFAULT_EPSILON,
    DEFAULT_ITERS,
    DEFAULT_TOL,
    HardAssignment,
    decode,
    default_marginals,
    gated_hungarian,
    sinkhorn,
)
from .costs import DEFAULT_GAMMA, CostMatrix, augment_dustbin, combine, cosine_cost
from .errors import EmbeddingCountMismatch, NonMonotonicFrame
from .geom import BoundingBox, Detection, iou_matrix

# per frame: list of (track_id, box)
TrackOutput = dict[int, list[tuple[int, BoundingBox]]]


@dataclass(frozen=True)
class TrackerConfig:
    sigma: float = 0.7
    epsilon: float = DEFAULT_EPSILON
    gamma: float = DEFAULT_GAMMA
    iters: int = DEFAULT_ITERS
    tol: float = DEFAULT_TOL
    max_age: int = 10
    matcher: str = "sinkhorn"

    def __post_init__(self):
        if self.matcher not in ("sinkhorn", "hungarian"):
            raise ValueError(f"unknown matcher {self.matcher!r}")
        if not (0.0 <= self.sigma <= 1.0):
            raise ValueError("sigma must lie in [0, 1]")
        if self.max_age < 0:
            raise ValueError("max_age must be nonnegative")


@dataclass
class Track:
    id: int
    last_box: BoundingBox
    last_embedding: np.ndarray
    last_seen_frame: int
    age: int = 0


@dataclass
class TrackSet:
    config: TrackerConfig = field(default_factory=TrackerConfig)
    live: list[Track] = field(default_factory=list)
    next_id: int = 1
    last_frame: Optional[int] = None


def association_cost(state: TrackSet, dets: Sequence[Detection], embeddings: np.ndarray) -> CostMatrix:
    """Blended track-to-detection cost (unaugmented).

    Tracks unmatched for more than one frame get IoU cost 1 everywhere.
    """
    cfg = state.config
    tracks = state.live
    sim = cosine_cost(np.array([t.last_embedding for t in tracks]), embeddings)
    ious = iou_matrix([t.last_box for t in tracks], [d.box for d in dets])
    stale = np.array([t.age > 1 for t in tracks], dtype=bool)
    ious[stale, :] = 0.0
    return combine(sim, CostMatrix(1.0 - ious), cfg.sigma)


def associate(cost: CostMatrix, config: TrackerConfig) -> HardAssignment:
    if config.matcher == "hungarian":
        return gated_hungarian(cost, config.gamma)
    n1, n2 = cost.shape
    plan = sinkhorn(
        augment_dustbin(cost, config.gamma),
        default_marginals(n1, n2),
        config.epsilon,
        config.iters,
        config.tol,
    )
    return decode(plan)


def step(
    state: TrackSet,
    frame: int,
    dets: Sequence[Detection],
    embeddings,
) -> tuple[TrackSet, list[tuple[int, BoundingBox]]]:
    """Advance ``state`` by one frame (in place) and return its output.

    Output pairs come in detection order.
    """
    embeddings = np.asarray(embeddings, dtype=float)
    if len(dets) == 0:
        embeddings = embeddings.reshape(0, embeddings.shape[-1] if embeddings.ndim == 2 else 0)
    if embeddings.ndim != 2 or len(embeddings) != len(dets):
        raise EmbeddingCountMismatch(
            f"{len(dets)} detections but {len(embeddings)} embeddings in frame {frame}"
        )
    if state.last_frame is not None and frame <= state.last_frame:
        raise NonMonotonicFrame(f"frame {frame} does not follow {state.last_frame}")
    state.last_frame = frame
    cfg = state.config

    matched: dict[int, int] = {}  # detection -> track position
    if state.live and len(dets):
        ha = associate(association_cost(state, dets, embeddings), cfg)
        matched = {j: i for i, j in ha.matches}

    out: list[tuple[int, BoundingBox]] = []
    hit = set(matched.values())
    new_tracks = []
    for j, det in enumerate(dets):
        if j in matched:
            t = state.live[matched[j]]
            t.last_box = det.box
            t.last_embedding = embeddings[j].copy()
            t.last_seen_frame = frame
            t.age = 0
        else:
            t = Track(state.next_id, det.box, embeddings[j].copy(), frame)
            state.next_id += 1
            new_tracks.append(t)
        out.append((t.id, det.box))

    survivors = []
    for pos, t in enumerate(state.live):
        if pos not in hit:
            t.age += 1
            if t.age > cfg.max_age:
                continue
        survivors.append(t)
    state.live = survivors + new_tracks
    return state, out


def run_sequence(
    frames: Iterable[tuple[int, Sequence[Detection], np.ndarray]],
    config: TrackerConfig = TrackerConfig(),
) -> TrackOutput:
    """Track a stream of ``(frame, detections, embeddings)``."""
    state = TrackSet(config)
    result: TrackOutput = {}
    for frame, dets, embs in frames:
        state, out = step(state, frame, dets, embs)
        result[frame] = out
    return result

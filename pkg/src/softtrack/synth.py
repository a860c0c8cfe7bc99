"""Synthetic scenarios with known identities.

Objects move at constant velocity inside an image, carry a latent unit
embedding, and can drop out for occlusion windows or by entering and
leaving the view. Everything is a pure function of ``(config, seed)``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
import numpy as np

from .assign import HardAssignment
from .costs import CostMatrix
from .errors import SeparationInfeasible, TooLarge
from .geom import BoundingBox, Detection, MotionField

MAX_BRUTE_FORCE = 8


@dataclass(frozen=True)
class SynthConfig:
    num_objects: int = 8
    num_frames: int = 50
    dim: int = 16
    separation: float = 0.5
    noise_sigma: float = 0.0
    width: int = 640
    height: int = 480
    min_size: float = 30.0
    max_size: float = 70.0
    max_speed: float = 3.0
    # occlusion: each object gets this many dropout windows of this length
    occlusions_per_object: int = 0
    occlusion_length: int = 3
    # stagger object lifetimes so that objects enter and leave mid-sequence
    enter_exit: bool = False
    # reject layouts where two visible boxes overlap in any frame
    allow_overlap: bool = True
    max_tries: int = 1000


@dataclass(frozen=True, eq=False)
class Scenario:
    config: SynthConfig
    seed: int
    latents: np.ndarray = field(repr=False)  # (N, d)
    boxes: np.ndarray = field(repr=False)  # (F, N, 4) corners
    visible: np.ndarray = field(repr=False)  # (F, N) bool
    embeddings: np.ndarray = field(repr=False)  # (F, N, d) observed, unit norm
    velocities: np.ndarray = field(repr=False)  # (N, 2)

    @property
    def num_frames(self) -> int:
        return self.boxes.shape[0]

    @property
    def num_objects(self) -> int:
        return self.boxes.shape[1]

    def box(self, frame: int, obj: int) -> BoundingBox:
        return BoundingBox(*map(float, self.boxes[frame, obj]))

    def visible_objects(self, frame: int) -> list[int]:
        return [int(k) for k in np.nonzero(self.visible[frame])[0]]

    def detections(self, frame: int) -> tuple[list[Detection], np.ndarray, list[int]]:
        """Visible objects in ``frame`` as ``(detections, embeddings, gt ids)``.

        Ground-truth ids are object index + 1.
        """
        objs = self.visible_objects(frame)
        dets = [Detection(self.box(frame, k), 1.0, 0, frame, r) for r, k in enumerate(objs)]
        embs = self.embeddings[frame, objs].reshape(len(objs), self.latents.shape[1])
        return dets, embs, [k + 1 for k in objs]

    def stream(self):
        """``(frame, detections, embeddings)`` for the tracker."""
        for f in range(self.num_frames):
            dets, embs, _ = self.detections(f)
            yield f, dets, embs

    def ground_truth(self) -> dict[int, list[tuple[int, BoundingBox]]]:
        return {
            f: [(k + 1, self.box(f, k)) for k in self.visible_objects(f)]
            for f in range(self.num_frames)
        }


def sample_latents(rng: np.random.Generator, n: int, dim: int, separation: float, max_tries: int) -> np.ndarray:
    """Unit vectors with pairwise cosine distance at least ``separation``.

    Vectors are drawn one at a time and redrawn when too close to an
    accepted one; the whole set is restarted after ``max_tries`` redraws.
    """
    for _ in range(max_tries):
        out: list[np.ndarray] = []
        redraws = 0
        while len(out) < n and redraws < max_tries:
            v = rng.normal(size=dim)
            v /= np.linalg.norm(v)
            if all(1.0 - v @ u >= separation for u in out):
                out.append(v)
            else:
                redraws += 1
        if len(out) == n:
            return np.array(out).reshape(n, dim)
    raise SeparationInfeasible(
        f"could not place {n} unit vectors in R^{dim} with separation {separation}"
    )


def _inside(boxes, w, h):
    return (boxes[..., 0] >= 0) & (boxes[..., 1] >= 0) & (boxes[..., 2] <= w) & (boxes[..., 3] <= h)


def _overlaps(boxes, visible) -> bool:
    for f in range(boxes.shape[0]):
        b = boxes[f, visible[f]]
        if len(b) < 2:
            continue
        lt = np.maximum(b[:, None, :2], b[None, :, :2])
        rb = np.minimum(b[:, None, 2:], b[None, :, 2:])
        inter = np.prod(np.clip(rb - lt, 0, None), axis=-1)
        np.fill_diagonal(inter, 0)
        if np.any(inter > 0):
            return True
    return False


def generate(config: SynthConfig = SynthConfig(), seed: int = 0) -> Scenario:
    rng = np.random.default_rng(seed)
    n, nf, c = config.num_objects, config.num_frames, config
    latents = sample_latents(rng, n, c.dim, c.separation, c.max_tries)

    for _ in range(c.max_tries):
        size = rng.uniform(c.min_size, c.max_size, size=(n, 2))
        vel = rng.uniform(-c.max_speed, c.max_speed, size=(n, 2))
        birth = np.zeros(n, dtype=int)
        death = np.full(n, nf)
        if c.enter_exit and nf > 1:
            birth = rng.integers(0, max(nf // 2, 1), size=n)
            span = rng.integers(max(nf // 4, 1), nf + 1, size=n)
            death = np.minimum(birth + span, nf)
        # place each object so that it is fully inside the image at birth
        lo = size / 2
        hi = np.array([c.width, c.height]) - size / 2
        center0 = rng.uniform(lo, hi)
        t = np.arange(nf)[:, None, None] - birth[None, :, None]
        centers = center0[None] + t * vel[None]
        boxes = np.concatenate([centers - size / 2, centers + size / 2], axis=-1)
        visible = _inside(boxes, c.width, c.height)
        alive = (np.arange(nf)[:, None] >= birth[None]) & (np.arange(nf)[:, None] < death[None])
        visible &= alive
        for k in range(n):
            for _ in range(c.occlusions_per_object):
                if nf > c.occlusion_length + 2:
                    start = rng.integers(1, nf - c.occlusion_length - 1)
                    visible[start:start + c.occlusion_length, k] = False
        if c.allow_overlap or not _overlaps(boxes, visible):
            break
    else:
        raise SeparationInfeasible("could not find a non-overlapping layout")

    noise = rng.normal(scale=c.noise_sigma, size=(nf, n, c.dim)) if c.noise_sigma > 0 else 0.0
    observed = latents[None] + noise
    observed = observed / np.linalg.norm(observed, axis=-1, keepdims=True)
    if c.noise_sigma == 0:
        observed = np.broadcast_to(latents, (nf, n, c.dim)).copy()
    return Scenario(config, seed, latents, boxes, visible, observed, vel)


def exact_motion(s: Scenario, frame_a: int, frame_b: int) -> MotionField:
    """Flow from ``frame_a`` to ``frame_b``: each object's pixels move by its
    true displacement, background stays at zero, and later objects paint
    over earlier ones where boxes overlap."""
    nf = s.num_frames
    if not (0 <= frame_a < nf and 0 <= frame_b < nf):
        raise ValueError("frames out of range")
    w, h = s.config.width, s.config.height
    flow = np.zeros((h, w, 2))
    xs = np.arange(w)
    ys = np.arange(h)
    for k in range(s.num_objects):
        if not s.visible[frame_a, k]:
            continue
        x1, y1, x2, y2 = s.boxes[frame_a, k]
        d = s.boxes[frame_b, k, :2] - s.boxes[frame_a, k, :2]
        cols = (xs >= np.floor(x1)) & (xs <= np.ceil(x2))
        rows = (ys >= np.floor(y1)) & (ys <= np.ceil(y2))
        flow[np.ix_(rows, cols)] = d
    return MotionField(flow)


@functools.lru_cache(maxsize=None)
def _injections(k: int, m: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(m), k)), dtype=np.intp).reshape(-1, k)


def brute_force_assign(c) -> HardAssignment:
    """Exhaustive minimum over all injections of the smaller side."""
    C = c.values if isinstance(c, CostMatrix) else np.asarray(c, dtype=float)
    n1, n2 = C.shape
    if min(n1, n2) > MAX_BRUTE_FORCE:
        raise TooLarge(f"brute force limited to min side <= {MAX_BRUTE_FORCE}")
    if n1 == 0 or n2 == 0:
        return HardAssignment.from_pairs([], n1, n2)
    flip = n1 > n2
    M = C.T if flip else C
    k, m = M.shape
    perms = _injections(k, m)
    totals = M[np.arange(k)[None, :], perms].sum(axis=1)
    best = perms[int(np.argmin(totals))]
    pairs = [(int(best[i]), i) if flip else (i, int(best[i])) for i in range(k)]
    return HardAssignment.from_pairs(pairs, n1, n2)

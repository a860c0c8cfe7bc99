"""Training objective: soft-assignment NLL plus a triplet term.

``total = alpha * triplet + beta * nll``. The NLL is taken over the
pseudo-labelled cells of the Sinkhorn plan, so its gradient flows back
through the unrolled iterations, the dustbin value and the cosine cost
into the embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .assign import (
    DEFAULT_EPSILON,
    DEFAULT_ITERS,
    TransportPlan,
    default_marginals,
    sinkhorn,
    sinkhorn_grad,
    sinkhorn_potentials,
)
from .costs import CostMatrix, augment_dustbin
from .errors import DimensionMismatch, LabelOutOfRange, ZeroNormEmbedding

LOG_FLOOR = 1e-30


@dataclass(frozen=True)
class LossParams:
    alpha: float = 1.0
    beta: float = 0.5
    margin: float = 0.3
    epsilon: float = DEFAULT_EPSILON
    iters: int = DEFAULT_ITERS
    metric: str = "l1"


@dataclass(frozen=True)
class LossBreakdown:
    nll: float
    triplet: float
    total: float
    alpha: float
    beta: float
    margin: float


def _pairs(labels) -> list[tuple[int, int]]:
    pairs = getattr(labels, "pairs", labels)
    return [(int(i), int(j)) for i, j in pairs]


def nll_loss(p: TransportPlan, labels) -> float:
    """``-sum log P[i, j]`` over the labelled real cells."""
    pairs = _pairs(labels)
    n1, n2 = p.entries.shape[0] - 1, p.entries.shape[1] - 1
    for i, j in pairs:
        if not (0 <= i < n1 and 0 <= j < n2):
            raise LabelOutOfRange(f"label ({i}, {j}) outside the {n1}x{n2} real block")
    if not pairs:
        return 0.0
    idx = tuple(np.array(pairs).T)
    return float(-np.log(np.maximum(p.entries[idx], LOG_FLOOR)).sum())


def embedding_distance(x, y, metric: str = "l1"):
    """Distance along the last axis: summed absolute difference or Euclidean."""
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if metric == "l1":
        return np.abs(diff).sum(axis=-1)
    if metric == "l2":
        return np.sqrt((diff * diff).sum(axis=-1))
    raise ValueError(f"unknown metric {metric!r}")


def triplet_loss(anchor, pos, neg, margin: float = 0.3, metric: str = "l1") -> float:
    a, p, n = (np.asarray(v, dtype=float) for v in (anchor, pos, neg))
    if not (a.shape == p.shape == n.shape):
        raise DimensionMismatch(f"triplet shapes differ: {a.shape}, {p.shape}, {n.shape}")
    d_ap = embedding_distance(a, p, metric)
    d_an = embedding_distance(a, n, metric)
    return float(max(d_ap - d_an + margin, 0.0))


def mine_triplets(ref, tgt, labels, metric: str = "l1") -> list[tuple[int, int, int]]:
    """Hardest-negative triplets ``(anchor, positive, negative)``.

    The anchor is a reference detection, the positive its labelled target,
    the negative the closest other target. Labels whose target frame has no
    other detection yield no triplet.
    """
    ref = np.asarray(ref, dtype=float)
    tgt = np.asarray(tgt, dtype=float)
    out = []
    if len(tgt) < 2:
        return out
    for i, j in _pairs(labels):
        d = embedding_distance(ref[i][None, :], tgt, metric)
        d[j] = np.inf
        k = int(np.argmin(d))
        out.append((i, j, k))
    return out


def total_loss(
    plan: TransportPlan,
    labels,
    triplets: Iterable[tuple],
    alpha: float = 1.0,
    beta: float = 0.5,
    margin: float = 0.3,
    metric: str = "l1",
) -> LossBreakdown:
    """Weighted sum of the NLL and the mean triplet loss.

    ``triplets`` holds ``(anchor, positive, negative)`` embedding vectors.
    """
    nll = nll_loss(plan, labels)
    trip = [triplet_loss(a, p, n, margin, metric) for a, p, n in triplets]
    t = float(np.mean(trip)) if trip else 0.0
    return LossBreakdown(nll, t, alpha * t + beta * nll, alpha, beta, margin)


# ---------------------------------------------------------------------------
# end-to-end objective over embeddings and the dustbin value
# ---------------------------------------------------------------------------

def _unit(x):
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ZeroNormEmbedding("cannot normalize a zero-norm embedding")
    return x / norms, norms


def train_loss(
    ref,
    tgt,
    gamma,
    labels,
    triplets: Sequence[tuple[int, int, int]] = (),
    params: LossParams = LossParams(),
):
    """Objective value for embeddings ``ref`` (n1, d), ``tgt`` (n2, d).

    Accepts stacked instances: ``ref`` (..., n1, d), ``tgt`` (..., n2, d)
    and ``gamma`` with mutually broadcastable leading shapes, in which case
    an array of totals is returned. For a single instance a
    :class:`LossBreakdown` is returned. ``triplets`` are index triples into
    ``ref``/``tgt``, held fixed.
    """
    ref = np.asarray(ref, dtype=float)
    tgt = np.asarray(tgt, dtype=float)
    batch = np.broadcast_shapes(ref.shape[:-2], tgt.shape[:-2], np.shape(gamma))
    n1, n2 = ref.shape[-2], tgt.shape[-2]
    pairs = _pairs(labels)

    u, _ = _unit(ref)
    w, _ = _unit(tgt)
    C = np.empty(batch + (n1 + 1, n2 + 1))
    C[..., :n1, :n2] = 1.0 - u @ np.swapaxes(w, -1, -2)
    g = np.broadcast_to(np.asarray(gamma, dtype=float), batch)
    C[..., n1, :] = g[..., None]
    C[..., :n1, n2] = g[..., None]

    m = default_marginals(n1, n2)
    rows, cols = m.a > 0, m.b > 0
    L = -C[..., rows, :][..., :, cols] / params.epsilon
    f, gg, _, _, _ = sinkhorn_potentials(L, np.log(m.a[rows]), np.log(m.b[cols]), params.iters)
    logP = L + f[..., :, None] + gg[..., None, :]
    # real rows/cols always have unit mass, so real indices survive the support cut
    nll = np.zeros(batch)
    for i, j in pairs:
        if not (0 <= i < n1 and 0 <= j < n2):
            raise LabelOutOfRange(f"label ({i}, {j}) outside the {n1}x{n2} real block")
        nll = nll - np.maximum(logP[..., i, j], np.log(LOG_FLOOR))

    trip = np.zeros(batch)
    for a, p, n in triplets:
        d_ap = embedding_distance(ref[..., a, :], tgt[..., p, :], params.metric)
        d_an = embedding_distance(ref[..., a, :], tgt[..., n, :], params.metric)
        trip = trip + np.maximum(d_ap - d_an + params.margin, 0.0)
    if len(triplets):
        trip = trip / len(triplets)

    total = params.alpha * trip + params.beta * nll
    if batch:
        return total
    return LossBreakdown(
        float(nll), float(trip), float(total), params.alpha, params.beta, params.margin
    )


def _dist_grad(diff, metric):
    if metric == "l1":
        return np.sign(diff)
    norm = np.linalg.norm(diff)
    return diff / norm if norm > 0 else np.zeros_like(diff)


def loss_and_grad(
    ref,
    tgt,
    gamma: float,
    labels,
    triplets: Sequence[tuple[int, int, int]] = (),
    params: LossParams = LossParams(),
):
    """Objective and its exact gradient.

    Returns ``(breakdown, d_ref, d_tgt, d_gamma)``. The Sinkhorn layer is
    differentiated through exactly ``params.iters`` unrolled iterations;
    hard-negative choices in ``triplets`` are treated as fixed.
    """
    ref = np.asarray(ref, dtype=float)
    tgt = np.asarray(tgt, dtype=float)
    if ref.ndim != 2 or tgt.ndim != 2 or ref.shape[1] != tgt.shape[1]:
        raise DimensionMismatch(f"embedding shapes {ref.shape} and {tgt.shape} disagree")
    n1, n2 = len(ref), len(tgt)
    pairs = _pairs(labels)

    u, nu = _unit(ref)
    w, nw = _unit(tgt)
    cost = augment_dustbin(CostMatrix(1.0 - u @ w.T), gamma)
    m = default_marginals(n1, n2)
    plan = sinkhorn(cost, m, params.epsilon, params.iters, unroll=True)

    trip_vecs = [(ref[a], tgt[p], tgt[n]) for a, p, n in triplets]
    breakdown = total_loss(
        plan, pairs, trip_vecs, params.alpha, params.beta, params.margin, params.metric
    )

    # NLL -> plan
    G = np.zeros_like(plan.entries)
    for i, j in pairs:
        pij = plan.entries[i, j]
        if pij > LOG_FLOOR:
            G[i, j] -= params.beta / pij
    dC, d_gamma = sinkhorn_grad(cost, m, params.epsilon, params.iters, G, plan=plan)

    # cost -> unit vectors -> raw embeddings
    dCr = dC[:n1, :n2]
    du = -dCr @ w
    dw = -dCr.T @ u
    d_ref = (du - u * (u * du).sum(axis=1, keepdims=True)) / nu
    d_tgt = (dw - w * (w * dw).sum(axis=1, keepdims=True)) / nw

    if triplets:
        scale = params.alpha / len(triplets)
        for a, p, n in triplets:
            d_ap = embedding_distance(ref[a], tgt[p], params.metric)
            d_an = embedding_distance(ref[a], tgt[n], params.metric)
            if d_ap - d_an + params.margin <= 0:
                continue
            gp = _dist_grad(ref[a] - tgt[p], params.metric)
            gn = _dist_grad(ref[a] - tgt[n], params.metric)
            d_ref[a] += scale * (gp - gn)
            d_tgt[p] -= scale * gp
            d_tgt[n] += scale * gn

    return breakdown, d_ref, d_tgt, d_gamma


def loss_grad(ref, tgt, gamma, labels, triplets=(), params: LossParams = LossParams()):
    """``(d_ref, d_tgt, d_gamma)`` of the training objective."""
    _, d_ref, d_tgt, d_gamma = loss_and_grad(ref, tgt, gamma, labels, triplets, params)
    return d_ref, d_tgt, d_gamma


def descend(
    ref,
    tgt,
    gamma: float,
    labels,
    steps: int = 200,
    rate: float = 0.5,
    params: LossParams = LossParams(),
    learn_gamma: bool = True,
):
    """Plain gradient descent on embeddings (and gamma), re-mining negatives
    every step. Returns ``(ref, tgt, gamma, history)`` with the per-step
    totals in ``history``."""
    ref = np.array(ref, dtype=float)
    tgt = np.array(tgt, dtype=float)
    history = []
    for _ in range(steps):
        trips = mine_triplets(ref, tgt, labels, params.metric)
        bd, d_ref, d_tgt, d_gamma = loss_and_grad(ref, tgt, gamma, labels, trips, params)
        history.append(bd.total)
        ref -= rate * d_ref
        tgt -= rate * d_tgt
        if learn_gamma:
            gamma -= rate * d_gamma
    return ref, tgt, gamma, history


def final_plan(ref, tgt, gamma: float, params: Optional[LossParams] = None) -> TransportPlan:
    params = params or LossParams()
    u, _ = _unit(np.asarray(ref, dtype=float))
    w, _ = _unit(np.asarray(tgt, dtype=float))
    cost = augment_dustbin(CostMatrix(1.0 - u @ w.T), gamma)
    return sinkhorn(cost, default_marginals(len(u), len(w)), params.epsilon, params.iters, unroll=True)

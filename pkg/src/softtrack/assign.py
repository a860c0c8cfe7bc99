"""Soft and hard assignment.

The soft assignment is entropy-regularized optimal transport solved with
log-domain Sinkhorn iterations. Its gradient is obtained by reverse-mode
differentiation of a fixed number of unrolled iterations, so the backward
pass is the exact derivative of what the forward pass computed.

Hard assignment uses an O(n^3) shortest-augmenting-path Hungarian solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .costs import CostMatrix
from .errors import (
    DimensionMismatch,
    InfeasibleMarginals,
    IterationMismatch,
    NonFiniteCost,
)

DEFAULT_EPSILON = 0.1
DEFAULT_ITERS = 100
DEFAULT_TOL = 1e-9
MASS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Marginals:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if np.any(a < 0) or np.any(b < 0):
            raise ValueError("marginals must be nonnegative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    entries: np.ndarray = field(repr=False)
    epsilon: float
    iterations_used: int
    marginal_violation: float
    unrolled: bool = False

    @property
    def real(self) -> np.ndarray:
        return self.entries[:-1, :-1]


@dataclass(frozen=True)
class HardAssignment:
    matches: tuple[tuple[int, int], ...]
    unmatched_rows: tuple[int, ...]
    unmatched_cols: tuple[int, ...]

    @classmethod
    def from_pairs(cls, pairs, n_rows: int, n_cols: int) -> "HardAssignment":
        pairs = tuple(sorted((int(i), int(j)) for i, j in pairs))
        rows = {i for i, _ in pairs}
        cols = {j for _, j in pairs}
        return cls(
            pairs,
            tuple(i for i in range(n_rows) if i not in rows),
            tuple(j for j in range(n_cols) if j not in cols),
        )

    def as_dict(self) -> dict[int, int]:
        return dict(self.matches)

    def cost(self, c) -> float:
        c = c.values if isinstance(c, CostMatrix) else np.asarray(c, dtype=float)
        return float(sum(c[i, j] for i, j in self.matches))


CostLike = Union[CostMatrix, np.ndarray]


def _values(c: CostLike) -> np.ndarray:
    return c.values if isinstance(c, CostMatrix) else np.asarray(c, dtype=float)


def default_marginals(n1: int, n2: int) -> Marginals:
    """Unit mass per detection; each dustbin holds the other side's count."""
    if n1 < 0 or n2 < 0:
        raise ValueError("counts must be nonnegative")
    a = np.ones(n1 + 1)
    b = np.ones(n2 + 1)
    a[-1] = n2
    b[-1] = n1
    return Marginals(a, b)


# ---------------------------------------------------------------------------
# Sinkhorn
# ---------------------------------------------------------------------------

def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def _check_inputs(C: np.ndarray, m: Marginals, epsilon: float):
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if C.ndim != 2 or C.shape != (m.a.size, m.b.size):
        raise DimensionMismatch(
            f"cost shape {C.shape} does not match marginals "
            f"({m.a.size}, {m.b.size})"
        )
    if not np.all(np.isfinite(C)):
        raise NonFiniteCost("cost matrix has non-finite entries")
    if abs(m.a.sum() - m.b.sum()) > MASS_TOL:
        raise InfeasibleMarginals(
            f"row mass {m.a.sum()} != column mass {m.b.sum()}"
        )


def sinkhorn_potentials(L, log_a, log_b, iters, tol=None, history=False):
    """Run log-domain Sinkhorn on ``L = -C / epsilon``.

    Works on stacked problems: ``L`` may have shape ``(..., n, m)``. Row
    potentials are updated first, then column potentials; with ``tol`` set
    the loop stops once the row marginals are met to within ``tol`` (the
    columns are exact after every column update).

    Returns ``(f, g, iterations, fs, gs)`` where ``fs``/``gs`` hold every
    iterate when ``history`` is true.
    """
    g = np.zeros(L.shape[:-2] + L.shape[-1:])
    a = np.exp(log_a)
    fs, gs = [], []
    f = None
    it = 0
    row_lse = _lse(L + g[..., None, :], axis=-1)
    while it < iters:
        f = log_a - row_lse
        g = log_b - _lse(L + f[..., :, None], axis=-2)
        it += 1
        if history:
            fs.append(f)
            gs.append(g)
        row_lse = _lse(L + g[..., None, :], axis=-1)
        if tol is not None:
            err = np.max(np.abs(np.exp(f + row_lse) - a))
            if err <= tol:
                break
    if f is None:
        f = log_a - row_lse
    return f, g, it, fs, gs


def _dual(L, f, g, a, b) -> float:
    with np.errstate(over="ignore"):
        mass = np.exp(L + f[:, None] + g[None, :]).sum()
    return float(a @ f + b @ g - mass) if np.isfinite(mass) else -np.inf


def _polished_potentials(L, log_a, log_b, max_iters, tol, warmup):
    """Sinkhorn sweeps followed by damped Newton steps on the dual.

    Plain Sinkhorn slows to a crawl when the plan is close to a hard
    assignment (small epsilon, dustbin cost near the match costs). After
    ``warmup`` sweeps each iteration instead takes a Newton step on the
    concave dual ``<a,f> + <b,g> - sum(P)`` with Armijo backtracking, then
    renormalizes the columns. The fixed point is unchanged.
    """
    a, b = np.exp(log_a), np.exp(log_b)
    n = L.shape[0]
    f = np.zeros(n)
    g = np.zeros(L.shape[1])
    it = 0
    while it < max_iters:
        newton = it >= warmup
        if newton:
            P = np.exp(L + f[:, None] + g[None, :])
            r, c = P.sum(axis=1), P.sum(axis=0)
            H = np.block([[np.diag(r), P], [P.T, np.diag(c)]])
            grad = np.concatenate([a - r, b - c])
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
            phi0 = _dual(L, f, g, a, b)
            slope = grad @ step
            s = 1.0
            newton = False
            while s > 1e-8:
                fn, gn = f + s * step[:n], g + s * step[n:]
                if _dual(L, fn, gn, a, b) >= phi0 + 1e-4 * s * slope:
                    f, g = fn, gn
                    newton = True
                    break
                s *= 0.5
        if not newton:
            f = log_a - _lse(L + g[None, :], axis=1)
        g = log_b - _lse(L + f[:, None], axis=0)
        it += 1
        err = np.max(np.abs(np.exp(f + _lse(L + g[None, :], axis=1)) - a))
        if err <= tol:
            break
    return f, g, it


def _support(m: Marginals):
    return m.a > 0, m.b > 0


def sinkhorn(
    c: CostLike,
    m: Marginals,
    epsilon: float = DEFAULT_EPSILON,
    max_iters: int = DEFAULT_ITERS,
    tol: float = DEFAULT_TOL,
    unroll: bool = False,
    polish: bool = True,
    warmup: int = 10,
) -> TransportPlan:
    """Entropic OT plan between marginals ``m.a`` and ``m.b`` under cost ``c``.

    With ``unroll=True`` exactly ``max_iters`` plain Sinkhorn iterations
    run (no early stop), which is the mode :func:`sinkhorn_grad`
    differentiates. Otherwise iteration stops once the marginals are met
    to ``tol``; ``polish`` switches to Newton steps after ``warmup``
    sweeps (see :func:`_polished_potentials`).

    Zero-mass rows and columns carry no mass in any feasible plan and are
    excluded from the iteration.
    """
    C = _values(c)
    _check_inputs(C, m, epsilon)
    rows, cols = _support(m)
    P = np.zeros_like(C)
    if not rows.any() or not cols.any():
        return TransportPlan(P, epsilon, 0, 0.0, unroll)
    L = -C[np.ix_(rows, cols)] / epsilon
    log_a, log_b = np.log(m.a[rows]), np.log(m.b[cols])
    if unroll or not polish:
        f, g, it, _, _ = sinkhorn_potentials(
            L, log_a, log_b, max_iters, tol=None if unroll else tol
        )
    else:
        f, g, it = _polished_potentials(L, log_a, log_b, max_iters, tol, warmup)
    P[np.ix_(rows, cols)] = np.exp(L + f[:, None] + g[None, :])
    viol = max(
        np.max(np.abs(P.sum(axis=1) - m.a)), np.max(np.abs(P.sum(axis=0) - m.b))
    )
    return TransportPlan(P, epsilon, it, float(viol), unroll)


def sinkhorn_grad(
    c: CostLike,
    m: Marginals,
    epsilon: float,
    iters: int,
    upstream: np.ndarray,
    plan: TransportPlan | None = None,
) -> tuple[np.ndarray, float]:
    """Gradient of ``<upstream, P>`` through ``iters`` unrolled iterations.

    Returns ``(dC, dGamma)``; ``dGamma`` sums ``dC`` over the dustbin row
    and column (corner counted once) when ``c`` is an augmented
    :class:`CostMatrix`, and is 0 otherwise.

    If the plan from the forward pass is supplied it must come from an
    unrolled run with the same iteration count.
    """
    if plan is not None and (not plan.unrolled or plan.iterations_used != iters):
        raise IterationMismatch(
            "gradients need a forward pass unrolled for exactly "
            f"{iters} iterations (got {plan.iterations_used}, "
            f"unrolled={plan.unrolled})"
        )
    C = _values(c)
    _check_inputs(C, m, epsilon)
    G = np.asarray(upstream, dtype=float)
    if G.shape != C.shape:
        raise DimensionMismatch(f"upstream shape {G.shape} != plan shape {C.shape}")
    dC = np.zeros_like(C)
    rows, cols = _support(m)
    if rows.any() and cols.any() and iters > 0:
        L = -C[np.ix_(rows, cols)] / epsilon
        dL = _unrolled_backward(
            L, np.log(m.a[rows]), np.log(m.b[cols]), iters, G[np.ix_(rows, cols)]
        )
        dC[np.ix_(rows, cols)] = -dL / epsilon
    d_gamma = 0.0
    if isinstance(c, CostMatrix) and c.augmented:
        d_gamma = float(dC[-1, :].sum() + dC[:-1, -1].sum())
    return dC, d_gamma


def _unrolled_backward(L, log_a, log_b, iters, G):
    f, g, _, fs, gs = sinkhorn_potentials(L, log_a, log_b, iters, history=True)
    P = np.exp(L + f[:, None] + g[None, :])
    dS = G * P
    dL = dS.copy()
    df = dS.sum(axis=1)
    dg = dS.sum(axis=0)
    for t in range(iters - 1, -1, -1):
        # g_t = log_b - lse_i(L + f_t)
        Q = _softmax(L + fs[t][:, None], axis=0)
        W = Q * dg[None, :]
        dL -= W
        df = df - W.sum(axis=1)
        # f_t = log_a - lse_j(L + g_{t-1}),  g_{-1} = 0
        g_prev = gs[t - 1] if t > 0 else np.zeros_like(g)
        R = _softmax(L + g_prev[None, :], axis=1)
        W = R * df[:, None]
        dL -= W
        dg = -W.sum(axis=0)
        df = np.zeros_like(df)
    return dL


# ---------------------------------------------------------------------------
# Hungarian
# ---------------------------------------------------------------------------

def _hungarian_square(a: np.ndarray) -> np.ndarray:
    """Shortest augmenting path assignment for a square matrix.

    Returns ``col_of_row``.
    """
    n = a.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row matched to column j (1-based)
    way = np.zeros(n + 1, dtype=int)
    cost = np.zeros((n + 1, n + 1))
    cost[1:, 1:] = a
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = cost[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row


def hungarian(c: CostLike) -> HardAssignment:
    """Minimum-cost assignment of ``min(n1, n2)`` pairs."""
    C = _values(c)
    if isinstance(c, CostMatrix) and c.augmented:
        raise ValueError("hungarian expects an unaugmented cost matrix")
    if C.ndim != 2:
        raise DimensionMismatch("cost matrix must be 2-D")
    if not np.all(np.isfinite(C)):
        raise NonFiniteCost("cost matrix has non-finite entries")
    n1, n2 = C.shape
    if n1 == 0 or n2 == 0:
        return HardAssignment.from_pairs([], n1, n2)
    n = max(n1, n2)
    # padding rows/columns cost the same whatever they pair with
    pad = float(np.max(C)) + 1.0
    sq = np.full((n, n), pad)
    sq[:n1, :n2] = C
    col_of_row = _hungarian_square(sq)
    pairs = [(i, int(col_of_row[i])) for i in range(n1) if col_of_row[i] < n2]
    return HardAssignment.from_pairs(pairs, n1, n2)


def decode(p: TransportPlan) -> HardAssignment:
    """Turn an augmented plan into hard matches.

    A real cell holding less mass than both of its dustbin cells is zeroed
    before a max-mass Hungarian solve. A detection whose dustbin cell holds
    more mass than every real cell in its row (column) stays unmatched.
    """
    P = p.entries
    n1, n2 = P.shape[0] - 1, P.shape[1] - 1
    if n1 <= 0 or n2 <= 0:
        return HardAssignment.from_pairs([], max(n1, 0), max(n2, 0))
    real = P[:n1, :n2]
    row_dust = P[:n1, n2]
    col_dust = P[n1, :n2]
    zeroed = (real < row_dust[:, None]) & (real < col_dust[None, :])
    masked = np.where(zeroed, 0.0, real)
    row_dom = row_dust > real.max(axis=1)
    col_dom = col_dust > real.max(axis=0)
    ha = hungarian(-masked)
    pairs = [
        (i, j) for i, j in ha.matches
        if not zeroed[i, j] and not row_dom[i] and not col_dom[j]
    ]
    return HardAssignment.from_pairs(pairs, n1, n2)


def gated_hungarian(c: CostLike, gamma: float) -> HardAssignment:
    """Exact hard solution of the dustbin-augmented problem.

    Under unit-mass marginals, matching a pair saves ``gamma`` relative to
    sending both detections to the dustbin, so pairs pay ``C - gamma`` and
    only pairs with ``C < gamma`` are ever worth keeping.
    """
    C = _values(c)
    ha = hungarian(np.minimum(C - gamma, 0.0))
    pairs = [(i, j) for i, j in ha.matches if C[i, j] < gamma]
    return HardAssignment.from_pairs(pairs, *C.shape)

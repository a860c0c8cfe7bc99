"""A small oracle battery that exercises every layer end to end.

Each check compares the package against an independent reference
(enumeration, finite differences, synthetic ground truth) on a handful of
seeded instances and reports pass/fail with a one-line detail.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assign import decode, default_marginals, hungarian, sinkhorn, sinkhorn_grad
from .costs import CostMatrix, augment_dustbin
from .loss import LossParams, loss_and_grad, train_loss
from .metrics import evaluate
from .synth import SynthConfig, brute_force_assign, generate
from .tracker import TrackerConfig, run_sequence


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def check_hungarian(n_per_size: int = 200, max_size: int = 6, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for n in range(1, max_size + 1):
        for _ in range(n_per_size):
            c = rng.uniform(size=(n, n))
            if hungarian(c).cost(c) != brute_force_assign(c).cost(c):
                bad += 1
    total = n_per_size * max_size
    return CheckResult("hungarian_vs_enumeration", bad == 0, f"{total - bad}/{total} exact")


def check_sinkhorn_marginals(n: int = 100, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    negative = False
    for _ in range(n):
        n1, n2 = rng.integers(1, 11, size=2)
        eps = rng.choice([0.05, 0.1, 0.5])
        c = augment_dustbin(CostMatrix(rng.uniform(size=(n1, n2))), rng.uniform(0.2, 1.0))
        p = sinkhorn(c, default_marginals(n1, n2), eps, max_iters=300, tol=1e-9)
        worst = max(worst, p.marginal_violation)
        negative |= bool((p.entries < 0).any())
    ok = worst <= 1e-6 and not negative
    return CheckResult("sinkhorn_marginals", ok, f"max violation {worst:.2e} over {n}")


def _rel_err(fd, an) -> float:
    scale = np.max(np.abs(fd))
    if scale == 0:
        return float(np.max(np.abs(an)))
    return float(np.max(np.abs(fd - an)) / scale)


def check_sinkhorn_grad(n: int = 5, seed: int = 2, h: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        n1, n2 = rng.integers(1, 5, size=2)
        eps, iters = 0.2, 30
        gamma = rng.uniform(0.2, 1.0)
        real = rng.uniform(size=(n1, n2))
        up = rng.normal(size=(n1 + 1, n2 + 1))
        m = default_marginals(n1, n2)

        def f(r, g):
            p = sinkhorn(augment_dustbin(CostMatrix(r), g), m, eps, iters, unroll=True)
            return float((up * p.entries).sum())

        c = augment_dustbin(CostMatrix(real), gamma)
        dC, dG = sinkhorn_grad(c, m, eps, iters, up)
        fd = np.zeros_like(real)
        for idx in np.ndindex(real.shape):
            e = np.zeros_like(real)
            e[idx] = h
            fd[idx] = (f(real + e, gamma) - f(real - e, gamma)) / (2 * h)
        fd_g = (f(real, gamma + h) - f(real, gamma - h)) / (2 * h)
        worst = max(worst, _rel_err(np.append(fd, fd_g), np.append(dC[:n1, :n2], dG)))
    return CheckResult("sinkhorn_gradient", worst <= 1e-4, f"max rel err {worst:.2e} over {n}")


def check_loss_grad(n: int = 5, seed: int = 3, h: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    params = LossParams()
    for _ in range(n):
        n1, n2 = rng.integers(2, 6, size=2)
        d = 8
        ref = rng.normal(size=(n1, d))
        tgt = rng.normal(size=(n2, d))
        gamma = rng.uniform(0.2, 1.0)
        k = min(n1, n2)
        labels = list(zip(range(k), rng.permutation(n2)[:k].tolist()))
        trips = [(i, j, (j + 1) % n2) for i, j in labels]
        _, d_ref, d_tgt, d_g = loss_and_grad(ref, tgt, gamma, labels, trips, params)

        def fd_of(x):
            # stacked central differences over every coordinate of x
            e = np.eye(x.size).reshape((x.size,) + x.shape) * h
            return x[None] + e, x[None] - e

        rp, rm = fd_of(ref)
        fd_ref = (train_loss(rp, tgt[None], gamma, labels, trips, params)
                  - train_loss(rm, tgt[None], gamma, labels, trips, params)) / (2 * h)
        tp, tm = fd_of(tgt)
        fd_tgt = (train_loss(ref[None], tp, gamma, labels, trips, params)
                  - train_loss(ref[None], tm, gamma, labels, trips, params)) / (2 * h)
        fd_g = (train_loss(ref, tgt, gamma + h, labels, trips, params).total
                - train_loss(ref, tgt, gamma - h, labels, trips, params).total) / (2 * h)
        fd = np.concatenate([fd_ref, fd_tgt, [fd_g]])
        an = np.concatenate([d_ref.ravel(), d_tgt.ravel(), [d_g]])
        worst = max(worst, _rel_err(fd, an))
    return CheckResult("loss_gradient", worst <= 1e-4, f"max rel err {worst:.2e} over {n}")


def well_separated_cost(rng, n: int = 5, margin: float = 0.5, max_tries: int = 10000) -> np.ndarray:
    """Uniform ``n x n`` cost whose best permutation beats the runner-up by
    more than ``margin``; drawn by rejection."""
    import itertools

    perms = np.array(list(itertools.permutations(range(n))))
    rows = np.arange(n)[None, :]
    for _ in range(max_tries):
        c = rng.uniform(size=(n, n))
        totals = np.sort(c[rows, perms].sum(axis=1))
        if totals[1] - totals[0] > margin:
            return c
    raise RuntimeError("no well-separated instance found")


def check_annealing(n: int = 100, seed: int = 4, epsilon: float = 0.01) -> CheckResult:
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n):
        c = well_separated_cost(rng)
        # gamma above every cost so that no pair is gated out
        p = sinkhorn(augment_dustbin(CostMatrix(c), 2.0), default_marginals(5, 5), epsilon, 300)
        hits += decode(p).matches == hungarian(c).matches
    return CheckResult("annealing", hits >= 0.99 * n, f"{hits}/{n} agree at eps={epsilon}")


def check_tracker(config: Optional[TrackerConfig] = None, seeds=(0, 1, 2)) -> list[CheckResult]:
    config = config or TrackerConfig()
    out = []
    ladder: list[tuple[str, SynthConfig, Callable]] = [
        ("tracker_noiseless", SynthConfig(), lambda r: r.idf1 == 1.0 and r.id_switches == 0),
        (
            "tracker_noise_occlusion",
            SynthConfig(noise_sigma=0.1, occlusions_per_object=1, occlusion_length=3),
            lambda r: r.idf1 >= 0.95,
        ),
    ]
    for name, sc, ok in ladder:
        reports = [evaluate(run_sequence(generate(sc, s).stream(), config), generate(sc, s).ground_truth())
                   for s in seeds]
        worst = min(r.idf1 for r in reports)
        out.append(CheckResult(name, all(ok(r) for r in reports), f"min IDF1 {worst:.4f} ({config.matcher})"))

    reused = 0
    for s in seeds:
        sc = generate(SynthConfig(enter_exit=True), s)
        reused += count_id_reuse(run_sequence(sc.stream(), config), sc)
    out.append(CheckResult("tracker_fresh_ids", reused == 0, f"{reused} reused ids"))
    return out


def count_id_reuse(pred, scenario) -> int:
    """Predicted ids that label more than one ground-truth object."""
    owner: dict[int, set[int]] = {}
    for f, rows in pred.items():
        _, _, gt_ids = scenario.detections(f)
        for (tid, _), g in zip(rows, gt_ids):
            owner.setdefault(tid, set()).add(g)
    return sum(len(v) > 1 for v in owner.values())


def run_all(tracker: Optional[TrackerConfig] = None) -> list[CheckResult]:
    results = [
        check_hungarian(),
        check_sinkhorn_marginals(),
        check_sinkhorn_grad(),
        check_loss_grad(),
        check_annealing(),
    ]
    results.extend(check_tracker(tracker))
    return results

"""
Soft assignment with a dustbin
==============================

Two frames of detections are matched by entropic optimal transport. An
extra row and column (the dustbin) soaks up detections that have no
partner, and a hard decode turns the soft plan into pairs.
"""

# %%
# Three tracks and two detections. Track 2 left the scene, so its costs
# to both detections are high.
import numpy as np

from softtrack import (
    CostMatrix,
    augment_dustbin,
    decode,
    default_marginals,
    gated_hungarian,
    hungarian,
    sinkhorn,
)

np.set_printoptions(precision=3, suppress=True)

c = np.array([
    [0.05, 0.90],
    [0.85, 0.10],
    [0.95, 0.92],
])
aug = augment_dustbin(CostMatrix(c), gamma=0.5)
print(aug.values)

# %%
# Every detection carries unit mass; each dustbin absorbs whatever the
# other side leaves over, so the problem is balanced for any n1, n2.
m = default_marginals(3, 2)
print("row mass", m.a, "column mass", m.b)

plan = sinkhorn(aug, m, epsilon=0.1)
print(plan.entries)
print("iterations", plan.iterations_used, "marginal violation", plan.marginal_violation)

# %%
# Decoding keeps the two confident pairs and sends track 2 to the dustbin.
# The gated Hungarian baseline agrees here.
print("decode:", decode(plan).matches)
print("gated hungarian:", gated_hungarian(c, 0.5).matches)

# %%
# Lowering the regularization sharpens the plan toward a permutation. On a
# well separated square cost the decode then reproduces the exact solver.
rng = np.random.default_rng(0)
perm = rng.permutation(5)
square = rng.uniform(size=(5, 5)) + 2.0 * (1 - np.eye(5)[perm])
for eps in (0.5, 0.1, 0.01):
    p = sinkhorn(augment_dustbin(CostMatrix(square), 5.0), default_marginals(5, 5), eps)
    same = decode(p).matches == hungarian(square).matches
    print(f"eps={eps}: max real entry {p.real.max():.3f}, decode == hungarian: {same}")

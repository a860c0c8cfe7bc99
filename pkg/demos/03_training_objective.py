"""
Training through the soft assignment
====================================

The training loss mixes a negative log-likelihood on the transport plan at
the pseudo-labeled cells with a triplet loss on the embeddings. Gradients
flow back through the unrolled Sinkhorn iterations into both the
embeddings and the dustbin value, so plain gradient descent can pull a
random initialization onto the labels.
"""

# %%
# Random embeddings for five detections per frame and a labeled
# correspondence that the embeddings do not yet reflect.
import numpy as np

from softtrack import LossParams, decode, descend, loss_and_grad, mine_triplets
from softtrack.loss import final_plan

rng = np.random.default_rng(5)
ref, tgt = rng.normal(size=(5, 8)), rng.normal(size=(5, 8))
labels = [(i, int(j)) for i, j in enumerate(rng.permutation(5))]
print("labels:", labels)
print("decoded before training:", decode(final_plan(ref, tgt, 0.5)).matches)

# %%
# One evaluation of the loss and its exact gradient. Triplets use the
# hardest negative in the target frame for every labeled anchor.
params = LossParams(alpha=1.0, beta=0.5)
trips = mine_triplets(ref, tgt, labels)
parts, d_ref, d_tgt, d_gamma = loss_and_grad(ref, tgt, 0.5, labels, trips, params)
print(f"nll {parts.nll:.3f}, triplet {parts.triplet:.3f}, total {parts.total:.3f}")
print(f"gradient norms: ref {np.linalg.norm(d_ref):.3f}, tgt {np.linalg.norm(d_tgt):.3f}, gamma {d_gamma:+.3f}")

# %%
# Two hundred plain gradient steps.
r, t, g, history = descend(ref, tgt, 0.5, labels, steps=200, rate=0.5, params=params)
for k in (0, 10, 50, 100, 199):
    print(f"step {k:3d}: loss {history[k]:.4f}")
print(f"learned dustbin value {g:.3f}")
print("decoded after training:", decode(final_plan(r, t, g, params)).matches)

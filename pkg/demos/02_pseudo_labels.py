"""
Pseudo-labels from motion
=========================

Without identity annotations, association labels come from motion: boxes
of the reference frame are moved by the flow sampled at their centers and
matched to the target frame by overlap. Stereo pairs add an occlusion mask
that removes boxes the other camera cannot see.
"""

# %%
# A synthetic scene supplies boxes for two frames and the exact flow
# between them.
import numpy as np

from softtrack import (
    BoundingBox,
    Detection,
    MotionField,
    SynthConfig,
    drop_occluded,
    exact_motion,
    generate,
    generate_pseudo_labels,
    stereo_occlusion_masks,
)

scene = generate(SynthConfig(num_objects=6, num_frames=25, allow_overlap=False), seed=11)
ref, _, ref_ids = scene.detections(0)
tgt, _, tgt_ids = scene.detections(24)
flow = exact_motion(scene, 0, 24)

labels = generate_pseudo_labels(ref, tgt, flow)
for (i, j), v in zip(labels.pairs, labels.ious):
    print(f"ref {i} (object {ref_ids[i]}) -> tgt {j} (object {tgt_ids[j]}), IoU after warp {v:.3f}")

# %%
# Without the warp, objects that moved far enough fall under the IoU gate
# and are discarded.
still = generate_pseudo_labels(ref, tgt, MotionField.constant(640, 480, (0.0, 0.0)))
print("pairs with zero flow:", len(still.pairs), "discarded for low IoU:", still.discarded_low_iou)

# %%
# Stereo occlusion. A foreground strip at disparity 6 hides a band of the
# background in the right view; pixels near the left border have no
# counterpart at all.
w, h = 40, 6
d_left = np.full((h, w), 2.0)
d_left[:, 15:25] = 6.0
d_right = np.full((h, w), 2.0)
d_right[:, 21:31] = 6.0
om_left, om_right = stereo_occlusion_masks(MotionField(d_left), MotionField(d_right))
print("right-view mask row:", "".join(map(str, om_right.bits[0])))
print("left-view mask row: ", "".join(map(str, om_left.bits[0])))

# %%
# Detections more than half covered by the mask are dropped before labels
# are generated.
boxes = [Detection(BoundingBox(x, 0, x + 4, h), 0.95) for x in (2, 17, 20, 30)]
kept = drop_occluded(boxes, om_right)
print("kept boxes start at x =", [d.box.x1 for d in kept])

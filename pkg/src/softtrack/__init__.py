"""Self-supervised multi-object tracking association on numpy.

Entropic optimal-transport soft assignment with a dustbin, motion-aligned
pseudo-labels, stereo occlusion masks, the training objective with exact
gradients, an online tracker and association metrics.
"""

from .assign import (
    HardAssignment,
    Marginals,
    TransportPlan,
    decode,
    default_marginals,
    gated_hungarian,
    hungarian,
    sinkhorn,
    sinkhorn_grad,
)
from .config import Config, parse_config, read_config
from .costs import CostMatrix, augment_dustbin, combine, cosine_cost, iou_cost
from .errors import *  # noqa: F401,F403
from .geom import BoundingBox, Detection, MotionField, iou, iou_matrix, nms, warp_box, warp_grid
from .loss import (
    LossBreakdown,
    LossParams,
    descend,
    loss_and_grad,
    mine_triplets,
    nll_loss,
    total_loss,
    train_loss,
    triplet_loss,
)
from .metrics import MetricReport, assoc_pr, evaluate, id_switches, idf1, match_frames
from .pseudo import (
    OcclusionMask,
    PseudoLabelSet,
    drop_occluded,
    filter_detections,
    generate_pseudo_labels,
    occlusion_mask,
    stereo_occlusion_masks,
)
from .synth import Scenario, SynthConfig, brute_force_assign, exact_motion, generate
from .tracker import Track, TrackerConfig, TrackSet, run_sequence, step

__version__ = "0.1.0"

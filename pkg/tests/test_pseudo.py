import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softtrack.errors import DimensionMismatch
from softtrack.geom import BoundingBox, Detection, MotionField
from softtrack.pseudo import (
    OcclusionMask,
    drop_occluded,
    filter_detections,
    generate_pseudo_labels,
    occluded_fraction,
    occlusion_mask,
    stereo_occlusion_masks,
)
from softtrack.synth import SynthConfig, exact_motion, generate

from oracles import occlusion_oracle


def _d(x1, y1, x2, y2, conf=0.95):
    return Detection(BoundingBox(x1, y1, x2, y2), conf)


def test_filter_confidence_and_area():
    assert filter_detections([_d(0, 0, 20, 20, 0.85)]) == []
    assert filter_detections([_d(0, 0, 9, 11)]) == []  # area 99
    keep = _d(0, 0, 10, 10)  # area exactly 100
    assert filter_detections([keep]) == [keep]
    assert filter_detections([]) == []


def test_filter_confidence_is_strict():
    assert filter_detections([_d(0, 0, 20, 20, 0.9)]) == []


def test_filter_then_nms():
    hi, lo = _d(0, 0, 20, 20, 0.99), _d(1, 1, 21, 21, 0.95)
    assert filter_detections([lo, hi]) == [hi]
    # the suppressor is filtered out first, so the weaker box survives
    small = _d(0, 0, 20, 4.9, 0.99)
    assert filter_detections([small, lo]) == [lo]


def test_pseudo_labels_two_objects_exact_flow():
    ref = [_d(10, 10, 30, 30), _d(60, 10, 80, 30)]
    flow = np.zeros((100, 100, 2))
    flow[:50, :50] = (5.0, 2.0)
    flow[:50, 50:] = (-4.0, 0.0)
    tgt = [_d(56, 10, 76, 30), _d(15, 12, 35, 32)]
    labels = generate_pseudo_labels(ref, tgt, MotionField(flow))
    assert labels.pairs == ((0, 1), (1, 0))
    np.testing.assert_allclose(labels.ious, 1.0)


def test_pseudo_labels_ref_only_object_unmatched():
    ref = [_d(10, 10, 30, 30), _d(60, 60, 80, 80)]
    tgt = [_d(10, 10, 30, 30)]
    labels = generate_pseudo_labels(ref, tgt, MotionField.constant(100, 100, (0.0, 0.0)))
    assert labels.pairs == ((0, 0),)


def test_pseudo_labels_exit_frame_counted():
    ref = [_d(10, 10, 30, 30), _d(90, 10, 110, 30)]  # second center at x=100
    tgt = [_d(10, 10, 30, 30)]
    labels = generate_pseudo_labels(ref, tgt, MotionField.constant(95, 100, (0.0, 0.0)))
    assert labels.pairs == ((0, 0),) and labels.dropped_out_of_field == 1


def test_pseudo_labels_low_iou_discarded():
    # IoU 0.05: overlap 1 x 10 on two 10x10 boxes -> 10 / 190
    ref, tgt = [_d(0, 0, 10, 10)], [_d(9, 0, 19, 10)]
    labels = generate_pseudo_labels(ref, tgt, MotionField.constant(40, 40, (0.0, 0.0)))
    assert labels.pairs == () and labels.discarded_low_iou == 1


def test_pseudo_labels_empty_target():
    labels = generate_pseudo_labels([_d(0, 0, 10, 10)], [], MotionField.constant(40, 40, (0.0, 0.0)))
    assert labels.pairs == ()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_pseudo_labels_partial_bijection_above_gate(seed):
    rng = np.random.default_rng(seed)
    ref = [_d(*xy, *(xy + rng.uniform(10, 30, 2))) for xy in rng.uniform(0, 100, (6, 2))]
    tgt = [_d(*xy, *(xy + rng.uniform(10, 30, 2))) for xy in rng.uniform(0, 100, (5, 2))]
    labels = generate_pseudo_labels(ref, tgt, MotionField(rng.uniform(-5, 5, (140, 140, 2))))
    rs = [i for i, _ in labels.pairs]
    ts = [j for _, j in labels.pairs]
    assert len(set(rs)) == len(rs) and len(set(ts)) == len(ts)
    assert all(v >= 0.1 for v in labels.ious)


def test_pseudo_labels_synthetic_ground_truth():
    sc = SynthConfig(num_objects=5, num_frames=2, allow_overlap=False)
    for seed in range(5):
        s = generate(sc, seed)
        ref, _, ref_ids = s.detections(0)
        tgt, _, tgt_ids = s.detections(1)
        labels = generate_pseudo_labels(ref, tgt, exact_motion(s, 0, 1))
        truth = {(i, tgt_ids.index(g)) for i, g in enumerate(ref_ids) if g in tgt_ids}
        assert set(labels.pairs) == truth


def test_occlusion_identical_constant_is_clear():
    d = MotionField.constant(10, 3, 0.0)
    assert not occlusion_mask(d, d).bits.any()


def test_occlusion_constant_shift_border():
    d = MotionField.constant(10, 3, 2.0)
    bits = occlusion_mask(d, d).bits
    assert bits[:, :2].all() and not bits[:, 2:].any()


def _step_grids():
    # d_near: background 2, foreground 10 at x in [2, 10)
    near = np.full((4, 16), 2.0)
    near[:, 2:10] = 10.0
    # d_far: foreground 10 at x in [12, 16)
    far = np.full((4, 16), 2.0)
    far[:, 12:] = 10.0
    return near, far


def test_occlusion_step_edge_hand_mask():
    near, far = _step_grids()
    bits = occlusion_mask(MotionField(near), MotionField(far)).bits
    want = np.zeros((4, 16), dtype=np.uint8)
    want[:, 0:2] = 1  # warp leaves the grid
    want[:, 4:12] = 1  # background pixels that land on the foreground: band of 8
    np.testing.assert_array_equal(bits, want)
    np.testing.assert_array_equal(bits, occlusion_oracle(near, far, 1.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 5.0))
def test_occlusion_matches_oracle(seed, tau):
    rng = np.random.default_rng(seed)
    near = rng.uniform(0, 4, (3, 9))
    far = rng.uniform(0, 4, (3, 9))
    bits = occlusion_mask(MotionField(near), MotionField(far), tau).bits
    np.testing.assert_array_equal(bits, occlusion_oracle(near, far, tau))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 3.0), st.floats(0.0, 3.0))
def test_occlusion_monotone_in_tau(seed, tau, extra):
    rng = np.random.default_rng(seed)
    near, far = MotionField(rng.uniform(0, 4, (3, 9))), MotionField(rng.uniform(0, 4, (3, 9)))
    lo = occlusion_mask(near, far, tau).bits
    hi = occlusion_mask(near, far, tau + extra).bits
    assert np.all(hi <= lo)


def test_occlusion_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        occlusion_mask(MotionField.constant(4, 4, 0.0), MotionField.constant(5, 4, 0.0))


def test_stereo_masks_left_uses_opposite_direction():
    d = MotionField.constant(10, 2, 2.0)
    om_l, om_r = stereo_occlusion_masks(d, d)
    assert om_r.bits[:, :2].all() and not om_r.bits[:, 2:].any()
    assert om_l.bits[:, -2:].all() and not om_l.bits[:, :-2].any()


def test_drop_occluded_examples():
    dets = [_d(0, 0, 4, 4), _d(6, 0, 10, 4)]
    clear = OcclusionMask(np.zeros((4, 10)))
    assert drop_occluded(dets, clear) == dets
    bits = np.zeros((4, 10))
    bits[:, 6:] = 1
    assert drop_occluded(dets, OcclusionMask(bits)) == dets[:1]


def test_drop_occluded_sixty_percent():
    # box covers 5 columns x 2 rows; 3 columns occluded -> 60%
    bits = np.zeros((2, 5))
    bits[:, :3] = 1
    box = _d(0, 0, 5, 2)
    assert occluded_fraction(box.box, OcclusionMask(bits)) == pytest.approx(0.6)
    assert drop_occluded([box], OcclusionMask(bits), 0.5) == []


def test_drop_occluded_max_ratio_one_keeps_everything():
    mask = OcclusionMask(np.ones((4, 4)))
    box = _d(0, 0, 4, 4)
    assert drop_occluded([box], mask, 1.0) == [box]


def test_drop_occluded_step_edge():
    near, far = _step_grids()
    mask = occlusion_mask(MotionField(near), MotionField(far))
    inside = _d(4, 0, 12, 4, 0.99)  # entirely in the band
    clear = _d(12, 0, 16, 4, 0.99)
    half = _d(2, 0, 6, 4, 0.99)  # columns 2..5, half in the band
    assert occluded_fraction(half.box, mask) == 0.5
    assert drop_occluded([inside, clear, half], mask) == [clear, half]

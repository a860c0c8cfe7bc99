import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from softtrack.costs import CostMatrix, augment_dustbin, combine, cosine_cost, iou_cost
from softtrack.errors import AlreadyAugmented, DimensionMismatch, ZeroNormEmbedding
from softtrack.geom import BoundingBox


def test_cosine_cost_examples():
    assert cosine_cost([[1, 0]], [[1, 0]]).values.tolist() == [[0.0]]
    assert cosine_cost([[1, 0]], [[0, 1]]).values.tolist() == [[1.0]]
    assert cosine_cost([[1, 0]], [[-1, 0]]).values.tolist() == [[2.0]]


def test_cosine_cost_errors():
    with pytest.raises(ZeroNormEmbedding):
        cosine_cost([[0, 0]], [[1, 0]])
    with pytest.raises(DimensionMismatch):
        cosine_cost([[1, 0]], [[1, 0, 0]])


vecs = arrays(np.float64, (3, 4), elements=st.floats(-10, 10)).filter(
    lambda a: np.all(np.linalg.norm(a, axis=1) > 1e-3)
)


@settings(max_examples=50)
@given(vecs, vecs, arrays(np.float64, 3, elements=st.floats(0.01, 100)))
def test_cosine_cost_scale_invariant(a, b, s):
    c = cosine_cost(a, b).values
    np.testing.assert_allclose(cosine_cost(a * s[:, None], b).values, c, atol=1e-9)
    assert np.all((c >= 0) & (c <= 2))


@settings(max_examples=50)
@given(vecs)
def test_cosine_cost_zero_diagonal(a):
    np.testing.assert_allclose(np.diag(cosine_cost(a, a).values), 0.0, atol=1e-12)


def test_iou_cost_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert iou_cost([a], [a]).values.tolist() == [[0.0]]
    assert iou_cost([a], [BoundingBox(20, 20, 30, 30)]).values.tolist() == [[1.0]]
    np.testing.assert_allclose(iou_cost([a], [BoundingBox(5, 0, 15, 10)]).values, [[2 / 3]])


def test_combine_examples():
    sim, io = CostMatrix([[0.2]]), CostMatrix([[0.6]])
    np.testing.assert_allclose(combine(sim, io, 0.7).values, [[0.32]], rtol=1e-15)
    rng = np.random.default_rng(0)
    s, i = CostMatrix(rng.uniform(size=(3, 4))), CostMatrix(rng.uniform(size=(3, 4)))
    assert np.array_equal(combine(s, i, 1.0).values, s.values)
    assert np.array_equal(combine(s, i, 0.0).values, i.values)


def test_combine_errors():
    with pytest.raises(DimensionMismatch):
        combine(CostMatrix(np.zeros((2, 2))), CostMatrix(np.zeros((2, 3))), 0.5)
    with pytest.raises(ValueError):
        combine(augment_dustbin(CostMatrix(np.zeros((1, 1)))), CostMatrix(np.zeros((2, 2))), 0.5)


@given(st.floats(0, 1), st.floats(0, 1))
def test_combine_monotone_in_sigma(s1, s2):
    lo, hi = sorted((s1, s2))
    sim, io = CostMatrix([[0.1, 0.3]]), CostMatrix([[0.5, 0.9]])
    assert np.all(combine(sim, io, hi).values <= combine(sim, io, lo).values + 1e-15)


def test_augment_examples():
    a = augment_dustbin(CostMatrix([[0.3]]), 0.5)
    assert a.values.tolist() == [[0.3, 0.5], [0.5, 0.5]]
    assert a.augmented and a.gamma == 0.5
    b = augment_dustbin(CostMatrix(np.arange(6.0).reshape(2, 3)), 0.5)
    assert b.shape == (3, 4)
    assert np.array_equal(augment_dustbin(CostMatrix(np.zeros((2, 2))), 0.0).values, np.zeros((3, 3)))


def test_augment_twice_rejected():
    with pytest.raises(AlreadyAugmented):
        augment_dustbin(augment_dustbin(CostMatrix([[0.3]])))


@given(arrays(np.float64, st.tuples(st.integers(0, 5), st.integers(0, 5)), elements=st.floats(-5, 5)),
       st.floats(-5, 5))
def test_augment_then_strip_is_exact(c, g):
    a = augment_dustbin(CostMatrix(c), g)
    assert np.array_equal(a.values[:-1, :-1], c)
    assert np.array_equal(a.real, c)
    assert np.all(a.values[-1, :] == g) and np.all(a.values[:, -1] == g)

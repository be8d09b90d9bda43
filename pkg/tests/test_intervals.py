import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dsiso.intervals import (EmptyIntersection, IntervalVector, bound_linear_map, intersect, resolve_crossing,
                             split)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def boxes(n):
    return st.tuples(arrays(float, n, elements=finite), arrays(float, n, elements=st.floats(0, 10))).map(
        lambda t: IntervalVector(t[0], t[0] + t[1]))


def test_split_examples():
    s = split([[1, -2]])
    assert s.plus.tolist() == [[1, 0]]
    assert s.minus.tolist() == [[0, 2]]
    assert s.abs.tolist() == [[1, 2]]
    z = split(np.zeros((2, 3)))
    assert not z.plus.any() and not z.minus.any() and not z.abs.any()
    M = np.array([[0.0, 3.0], [1.5, 2.0]])
    s = split(M)
    assert np.array_equal(s.plus, M) and not s.minus.any()


@given(arrays(float, (3, 4), elements=finite))
def test_split_invariants(M):
    s = split(M)
    assert np.array_equal(s.plus - s.minus, M)
    assert np.array_equal(s.plus + s.minus, np.abs(M))
    assert (s.plus >= 0).all() and (s.minus >= 0).all()
    assert not np.minimum(s.plus, s.minus).any()


def test_interval_rejects_inverted_bounds():
    with pytest.raises(ValueError, match="lower > upper"):
        IntervalVector([0.0, 2.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        IntervalVector([np.nan], [1.0])


def test_interval_helpers():
    I = IntervalVector.symmetric([1.0, 2.0], center=[0.0, 1.0])
    assert I.width.tolist() == [2.0, 4.0]
    assert I.center.tolist() == [0.0, 1.0]
    assert I.contains([0.5, -1.0])
    assert not I.contains([1.5, 0.0])
    assert I.contains([1.0 + 1e-12, 0.0], atol=1e-9)
    p = IntervalVector.point([1.0, 2.0])
    assert not p.width.any()


def test_bound_linear_map_examples():
    out = bound_linear_map([[1, -2]], IntervalVector([0, 0], [1, 1]))
    assert out.lower.tolist() == [-2.0] and out.upper.tolist() == [1.0]
    I = IntervalVector([-1.0, 0.5, 2.0], [0.0, 3.0, 2.5])
    out = bound_linear_map(np.eye(3), I)
    assert np.array_equal(out.lower, I.lower) and np.array_equal(out.upper, I.upper)
    with pytest.raises(ValueError, match="columns"):
        bound_linear_map(np.eye(2), I)


def test_bound_linear_map_monte_carlo(rng):
    M = rng.normal(size=(4, 4))
    lo = rng.normal(size=4)
    I = IntervalVector(lo, lo + rng.uniform(0, 3, size=4))
    out = bound_linear_map(M, I)
    xs = rng.uniform(I.lower, I.upper, size=(1000, 4))
    y = xs @ M.T
    assert (y >= out.lower - 1e-12).all() and (y <= out.upper + 1e-12).all()


@settings(max_examples=200)
@given(arrays(float, (3, 4), elements=finite), boxes(4), st.data())
def test_bound_linear_map_contains_samples(M, I, data):
    u = data.draw(arrays(float, 4, elements=st.floats(0, 1)))
    x = I.lower + u * I.width
    x = np.clip(x, I.lower, I.upper)
    out = bound_linear_map(M, I)
    slack = 1e-9 * (1 + np.abs(M) @ np.maximum(np.abs(I.lower), np.abs(I.upper)))
    y = M @ x
    assert (y >= out.lower - slack).all() and (y <= out.upper + slack).all()


@given(arrays(float, (3, 4), elements=finite), arrays(float, 4, elements=finite))
def test_bound_linear_map_exact_at_points(M, x):
    out = bound_linear_map(M, IntervalVector.point(x))
    assert np.array_equal(out.lower, out.upper)
    np.testing.assert_allclose(out.lower, M @ x, rtol=1e-12, atol=1e-9)


def test_intersect_examples():
    out = intersect(IntervalVector([0.0], [2.0]), IntervalVector([1.0], [3.0]))
    assert out.lower.tolist() == [1.0] and out.upper.tolist() == [2.0]
    I = IntervalVector([0.0, -1.0], [1.0, 1.0])
    out = intersect(I, I)
    assert np.array_equal(out.lower, I.lower) and np.array_equal(out.upper, I.upper)
    with pytest.raises(EmptyIntersection) as exc:
        intersect(IntervalVector([0.0], [1.0]), IntervalVector([2.0], [3.0]))
    assert exc.value.indices.tolist() == [0]


@given(boxes(3), boxes(3))
def test_intersection_never_widens(a, b):
    try:
        out = intersect(a, b)
    except EmptyIntersection:
        return
    assert (out.width <= np.minimum(a.width, b.width)).all()


def test_resolve_crossing():
    lo, hi = np.array([1.0, 0.0]), np.array([1.0 - 1e-12, 1.0])
    a, b = resolve_crossing(lo, hi)
    assert a[0] == 1.0 - 1e-12 and b[0] == 1.0
    assert a[1] == 0.0 and b[1] == 1.0
    # clipped to the receiver's own interval
    a, b = resolve_crossing(lo, hi, own=(np.array([0.99, 0.0]), np.array([1.0 - 5e-13, 1.0])))
    assert a[0] == 1.0 - 1e-12 and b[0] == 1.0 - 5e-13
    with pytest.raises(EmptyIntersection):
        resolve_crossing(np.array([1.0]), np.array([0.9]))
    # a large term magnitude tolerates a larger crossing
    a, b = resolve_crossing(np.array([1.0]), np.array([1.0 - 1e-7]), scale=np.array([1e3]))
    assert a[0] <= b[0]

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coordfeas.matlite import Inconsistent, null_basis, particular_and_null, rank_of, solve_particular


def test_rank_examples():
    assert rank_of(np.eye(2)) == 2
    assert rank_of(np.zeros((2, 2))) == 0
    # second row is twice the first: determinant 0, one nonzero singular value
    assert rank_of([[1, 2], [2, 4]]) == 1


def test_rank_rejects_bad_input():
    with pytest.raises(ValueError):
        rank_of(np.eye(2), tol=0)
    with pytest.raises(ValueError):
        rank_of([[np.nan, 1.0]])


def test_solve_particular_examples():
    np.testing.assert_allclose(solve_particular([[1, 0], [0, 0]], [1, 0]), [1, 0], atol=1e-15)
    with pytest.raises(Inconsistent):
        solve_particular([[0, 0]], [1])
    # min x1^2 + x2^2 subject to x1 + x2 = 2 is x1 = x2 = 1 (Lagrange by hand)
    np.testing.assert_allclose(solve_particular([[1, 1]], [2]), [1, 1], atol=1e-15)


def test_solve_particular_shape_mismatch():
    with pytest.raises(ValueError):
        solve_particular(np.eye(2), [1, 2, 3])


def test_null_basis_examples(rng):
    k = null_basis([[1, 0]])
    assert k.shape == (2, 1)
    np.testing.assert_allclose(np.abs(k[:, 0]), [0, 1], atol=1e-15)
    assert null_basis(np.eye(2)).shape == (2, 0)
    a = rng.normal(size=(3, 6))
    k = null_basis(a)
    assert k.shape == (6, 3)
    assert np.max(np.abs(a @ k)) < 1e-12
    np.testing.assert_allclose(k.T @ k, np.eye(3), atol=1e-12)


def test_null_basis_is_deterministic(rng):
    a = rng.normal(size=(2, 5))
    np.testing.assert_array_equal(null_basis(a), null_basis(a.copy()))


def test_particular_and_null_agrees_with_separate_calls(rng):
    a = rng.normal(size=(3, 7))
    b = rng.normal(size=3)
    x, k, r = particular_and_null(a, b)
    assert r == 3
    np.testing.assert_allclose(x, solve_particular(a, b), atol=1e-12)
    np.testing.assert_allclose(k, null_basis(a), atol=1e-12)
    with pytest.raises(Inconsistent):
        particular_and_null([[1, 0], [1, 0]], [0, 1])


def test_empty_system():
    x, k, r = particular_and_null(np.zeros((0, 3)), np.zeros(0))
    assert r == 0 and k.shape == (3, 3) and not x.any()


mats = arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
              elements=st.floats(-10, 10, allow_nan=False, width=64))


@settings(max_examples=200, deadline=None)
@given(mats)
def test_rank_nullity(a):
    k = null_basis(a)
    assert rank_of(a) + k.shape[1] == a.shape[1]
    if k.shape[1]:
        assert np.max(np.abs(a @ k)) <= 1e-8 * (1 + np.max(np.abs(a)))
        np.testing.assert_allclose(k.T @ k, np.eye(k.shape[1]), atol=1e-10)


@settings(max_examples=200, deadline=None)
@given(mats, st.floats(0.1, 100))
def test_rank_is_scale_invariant(a, c):
    assert rank_of(a) == rank_of(c * a)


def _clear_rank_gap(a):
    # singular values either clearly nonzero or numerically zero
    s = np.linalg.svd(a, compute_uv=False)
    top = s[0] if s[0] > 0 else 1.0
    return all(v > 1e-6 * top or v < 1e-13 * top for v in s)


@settings(max_examples=200, deadline=None)
@given(mats, st.data())
def test_particular_solution_is_minimum_norm(a, data):
    assume(_clear_rank_gap(a))
    # any consistent right-hand side: b = a @ z
    z = data.draw(arrays(np.float64, a.shape[1], elements=st.floats(-5, 5, width=64)))
    b = a @ z
    x = solve_particular(a, b)
    assert np.max(np.abs(a @ x - b)) <= 1e-8 * (1 + np.max(np.abs(b)))
    # minimum norm means x is orthogonal to the null space
    k = null_basis(a)
    if k.shape[1]:
        assert np.max(np.abs(k.T @ x)) <= 1e-7 * (1 + np.linalg.norm(x))

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trisplit.errors import DimensionError, NotSurjective
from trisplit.linop import (DenseOperator, jacobi_eigenvalues, load_matrix_csv,
                            spectral_norm, spectral_quantities)


def mp_eigs(sym):
    # 50-digit reference eigenvalues
    with mpmath.workdps(50):
        vals = mpmath.eigsy(mpmath.matrix(np.asarray(sym).tolist()))[0]
        return sorted(float(v) for v in vals)


def test_identity_spectrum():
    op = DenseOperator.identity(3)
    assert op.norm == 1.0
    assert op.min_eig_aat == 1.0
    assert op.kappa == 1.0
    assert op.is_surjective


def test_first_difference_3():
    a = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0]])
    norm, lam, kappa = spectral_quantities(a)
    # AA^T = [[2, -1], [-1, 2]] has eigenvalues 1 and 3
    assert lam == pytest.approx(1.0, rel=1e-14)
    assert norm == pytest.approx(math.sqrt(3.0), rel=1e-14)
    assert kappa == pytest.approx(3.0, rel=1e-14)


def test_diagonal_wide():
    norm, lam, kappa = spectral_quantities([[2.0, 0.0, 0.0], [0.0, 0.5, 0.0]])
    assert norm == pytest.approx(2.0)
    assert lam == pytest.approx(0.25)
    assert kappa == pytest.approx(16.0)


def test_rank_deficient_raises_with_data():
    with pytest.raises(NotSurjective) as info:
        spectral_quantities([[1.0, 2.0], [2.0, 4.0]])
    assert info.value.norm == pytest.approx(5.0)
    assert info.value.min_eig_aat == pytest.approx(0.0, abs=1e-12)


def test_tall_matrix_not_surjective():
    with pytest.raises(NotSurjective):
        spectral_quantities(np.ones((3, 2)))
    op = DenseOperator(np.ones((3, 2)))
    assert not op.is_surjective
    assert op.kappa == math.inf
    with pytest.raises(NotSurjective):
        op.require_surjective()


def test_jacobi_matches_characteristic_polynomial():
    sym = np.array([[4.0, 1.0, -2.0], [1.0, 2.0, 0.0], [-2.0, 0.0, 3.0]])
    # roots of det(sym - t I) from the cubic's coefficients
    coeffs = np.poly(sym)
    roots = sorted(float(r) for r in mpmath.polyroots([mpmath.mpf(c) for c in coeffs], maxsteps=200, extraprec=100))
    np.testing.assert_allclose(jacobi_eigenvalues(sym), roots, rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-10, 10, allow_nan=False, width=64)))
def test_jacobi_against_high_precision(a):
    sym = a @ a.T
    got = jacobi_eigenvalues(sym)
    ref = mp_eigs(sym)
    scale = max(1.0, abs(ref[-1]))
    np.testing.assert_allclose(got, ref, atol=1e-12 * scale)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 4), st.integers(0, 2**32 - 1))
def test_spectral_norm_matches_singular_values(p, extra, seed):
    a = np.random.default_rng(seed).standard_normal((p, p + extra))
    assert spectral_norm(a) == pytest.approx(np.linalg.svd(a, compute_uv=False)[0], rel=1e-12)
    assert spectral_norm(a.T) == pytest.approx(spectral_norm(a), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 4), st.integers(0, 2**32 - 1))
def test_spectral_quantities_properties(p, extra, seed):
    a = np.random.default_rng(seed).standard_normal((p, p + extra))
    norm, lam, kappa = spectral_quantities(a)
    assert 0 < lam <= norm**2 * (1 + 1e-12)
    assert kappa >= 1.0
    assert kappa == pytest.approx(norm**2 / lam)
    # scaling A by s scales the norm by |s| and leaves kappa alone
    n2, l2, k2 = spectral_quantities(-3.0 * a)
    assert n2 == pytest.approx(3.0 * norm, rel=1e-12)
    assert k2 == pytest.approx(kappa, rel=1e-9)


def test_apply_and_adjoint():
    a = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, -1.0]])
    op = DenseOperator(a)
    x = np.array([1.0, -1.0, 2.0])
    v = np.array([0.5, 3.0])
    np.testing.assert_array_equal(op.apply(x), a @ x)
    np.testing.assert_array_equal(op.adjoint_apply(v), a.T @ v)
    assert op.apply(x) @ v == pytest.approx(x @ op.adjoint_apply(v))
    # batches over leading axes
    xs = np.stack([x, 2 * x])
    np.testing.assert_allclose(op.apply(xs), xs @ a.T)


def test_coupling_matrix():
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    op = DenseOperator(a)
    x = np.array([1.0, -2.0])
    expected = (5.0 * np.eye(2) - 0.5 * a.T @ a) @ x
    np.testing.assert_allclose(op.coupling_matrix_apply(5.0, 0.5, x), expected)


def test_dimension_errors():
    op = DenseOperator.identity(2)
    with pytest.raises(DimensionError):
        op.apply(np.ones(3))
    with pytest.raises(DimensionError):
        op.adjoint_apply(np.ones(1))
    with pytest.raises(DimensionError):
        jacobi_eigenvalues(np.ones((2, 3)))


def test_entries_read_only():
    op = DenseOperator([[1.0, 0.0], [0.0, 2.0]])
    with pytest.raises(ValueError):
        op.entries[0, 0] = 5.0


def test_csv_round_trip(tmp_path):
    a = np.array([[1.0, -0.5, 2.0], [3.25, 0.0, 1.0]])
    path = tmp_path / "a.csv"
    np.savetxt(path, a, delimiter=",")
    np.testing.assert_array_equal(load_matrix_csv(path), a)
    assert DenseOperator.from_csv(path).shape == (2, 3)


@pytest.mark.parametrize("a, x, ax, v, atv", [
    (np.eye(2), [3.0, -1.0], [3.0, -1.0], [1.0, 2.0], [1.0, 2.0]),
    (np.diag([3.0, 1.0]), [1.0, 1.0], [3.0, 1.0], [1.0, 1.0], [3.0, 1.0]),
    ([[1.0, 1.0], [0.0, 1.0]], [1.0, 2.0], [3.0, 2.0], [1.0, 1.0], [1.0, 2.0]),
])
def test_apply_hand_examples(a, x, ax, v, atv):
    op = DenseOperator(a)
    np.testing.assert_array_equal(op.apply(x), ax)
    np.testing.assert_array_equal(op.adjoint_apply(v), atv)


def test_upper_triangular_spectrum():
    norm, lam, kappa = spectral_quantities([[1.0, 1.0], [0.0, 1.0]])
    # AA^T = [[2, 1], [1, 1]]: eigenvalues (3 +- sqrt 5)/2
    assert norm**2 == pytest.approx((3 + math.sqrt(5)) / 2, rel=1e-10)
    assert lam == pytest.approx((3 - math.sqrt(5)) / 2, rel=1e-10)
    assert norm == pytest.approx(1.6180339887, rel=1e-9)
    assert kappa == pytest.approx(6.854101966, rel=1e-9)


@pytest.mark.parametrize("a, tau, beta, x, expected", [
    (np.eye(2), 2.0, 1.0, [1.0, 1.0], [1.0, 1.0]),
    ([[1.0, 2.0], [3.0, 4.0]], 1.0, 1.0, [0.0, 0.0], [0.0, 0.0]),
    ([[2.0]], 5.0, 1.0, [1.0], [1.0]),
])
def test_coupling_matrix_examples(a, tau, beta, x, expected):
    np.testing.assert_allclose(DenseOperator(a).coupling_matrix_apply(tau, beta, x), expected)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_vector_invariants(seed):
    rng = np.random.default_rng(seed)
    p, m = 3, 5
    op = DenseOperator(rng.standard_normal((p, m)))
    xs = rng.standard_normal((1000, m))
    xs /= np.linalg.norm(xs, axis=1, keepdims=True)
    vs = rng.standard_normal((1000, p))
    vs /= np.linalg.norm(vs, axis=1, keepdims=True)
    assert np.all(np.linalg.norm(op.apply(xs), axis=1) <= op.norm * (1 + 1e-9))
    assert np.all(np.sum(op.adjoint_apply(vs) ** 2, axis=1) >= op.min_eig_aat * (1 - 1e-9))
    # ||B|| <= tau once 2 tau >= beta ||A||^2
    beta = 0.7
    tau = beta * op.norm**2 / 2
    bx = op.coupling_matrix_apply(tau, beta, xs)
    assert np.all(np.linalg.norm(bx, axis=1) <= tau * (1 + 1e-9))
    # adjoint consistency
    lhs = np.sum(op.apply(xs) * vs, axis=1)
    rhs = np.sum(xs * op.adjoint_apply(vs), axis=1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-14)


@pytest.mark.filterwarnings("error::RuntimeWarning")
@pytest.mark.parametrize("scale", [1e-300, 1e-150, 1.0, 1e150, 1e300])
def test_jacobi_extreme_scales(scale):
    # eigenvalues of [[0, s], [s, 0]] are -s and s; of [[s, s], [s, s]] are 0 and 2s
    np.testing.assert_allclose(jacobi_eigenvalues([[0.0, scale], [scale, 0.0]]), [-scale, scale], rtol=1e-14)
    if scale <= 1e300 / 2:
        np.testing.assert_allclose(jacobi_eigenvalues([[scale, scale], [scale, scale]]), [0.0, 2 * scale],
                                   rtol=1e-14, atol=1e-15 * scale)

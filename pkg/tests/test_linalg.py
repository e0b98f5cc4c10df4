import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from frmomentum.linalg import (
    LinalgError,
    check_symmetric,
    condition_number,
    jacobi_eigh,
    jacobi_singular_values,
    matvec,
    pseudoinverse_norm,
    singular_values,
    spectral_norm,
    symmetric_eigenvalues,
)
from frmomentum.objectives import build_cycle_laplacian, make_rng

METHODS = ["lapack", "jacobi"]
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def _random_symmetric(rng, d):
    M = rng.standard_normal((d, d))
    return M + M.T


# matvec ------------------------------------------------------------------


def test_matvec_identity():
    np.testing.assert_array_equal(matvec(np.eye(3), [1, 2, 3]), [1, 2, 3])


def test_matvec_cycle_laplacian_hand_expansion():
    np.testing.assert_array_equal(matvec(build_cycle_laplacian(3), [1, 0, 0]), [2, -1, -1])


def test_matvec_zero_matrix():
    np.testing.assert_array_equal(matvec(np.zeros((4, 4)), [1, -2, 3, 5]), np.zeros(4))


def test_matvec_dimension_mismatch():
    with pytest.raises(LinalgError):
        matvec(np.eye(3), [1.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(arrays(float, (4, 4), elements=finite), arrays(float, 4, elements=finite),
       arrays(float, 4, elements=finite), finite)
def test_matvec_is_linear(A, x, y, c):
    lhs = matvec(A, c * x + y)
    rhs = c * matvec(A, x) + matvec(A, y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(A).sum() * (abs(c) + 1) * 20))


# symmetry ----------------------------------------------------------------


def test_check_symmetric_rejects_asymmetric():
    with pytest.raises(LinalgError):
        check_symmetric([[1.0, 2.0], [0.0, 1.0]])


def test_check_symmetric_accepts_rounding_level_asymmetry():
    A = np.array([[1.0, 2.0], [2.0 + 1e-15, 1.0]])
    check_symmetric(A)


# eigenvalues -------------------------------------------------------------


@pytest.mark.parametrize("method", METHODS)
def test_eigenvalues_diagonal(method):
    np.testing.assert_allclose(symmetric_eigenvalues(np.diag([3.0, 1.0, 2.0]), method), [1, 2, 3])


@pytest.mark.parametrize("method", METHODS)
def test_eigenvalues_identity(method):
    np.testing.assert_allclose(symmetric_eigenvalues(np.eye(5), method), np.ones(5))


@pytest.mark.parametrize("method", METHODS)
def test_cycle_laplacian_d4_spectrum(method):
    # oracle: roots of the characteristic polynomial, independent of both solvers
    L = build_cycle_laplacian(4)
    roots = np.sort(np.roots(np.poly(L)).real)
    np.testing.assert_allclose(roots, [0, 2, 2, 4], atol=1e-6)
    np.testing.assert_allclose(symmetric_eigenvalues(L, method), [0, 2, 2, 4], atol=1e-12)


@pytest.mark.parametrize("d", [5, 12, 31])
def test_cycle_laplacian_analytic_spectrum(d):
    expected = np.sort(2 - 2 * np.cos(2 * np.pi * np.arange(d) / d))
    np.testing.assert_allclose(symmetric_eigenvalues(build_cycle_laplacian(d), "jacobi"), expected, atol=1e-12)


def test_jacobi_matches_lapack_and_reconstructs():
    rng = make_rng(0)
    A = _random_symmetric(rng, 20)
    lam, V = jacobi_eigh(A)
    np.testing.assert_allclose(lam, np.linalg.eigvalsh(A), atol=1e-11)
    np.testing.assert_allclose(V @ np.diag(lam) @ V.T, A, atol=1e-11)
    np.testing.assert_allclose(V.T @ V, np.eye(20), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_eigenvalues_ascending_and_trace_preserving(d, seed):
    A = _random_symmetric(make_rng(seed), d)
    for method in METHODS:
        lam = symmetric_eigenvalues(A, method)
        assert np.all(np.diff(lam) >= 0)
        assert abs(lam.sum() - np.trace(A)) <= 1e-10 * (1 + np.abs(A).sum())


def test_eigenvalues_reject_nonsymmetric():
    with pytest.raises(LinalgError):
        symmetric_eigenvalues(np.array([[1.0, 1.0], [0.0, 1.0]]))


# singular values / conditioning ------------------------------------------


def test_one_sided_jacobi_matches_lapack():
    M = make_rng(1).standard_normal((7, 4))
    np.testing.assert_allclose(jacobi_singular_values(M), np.linalg.svd(M, compute_uv=False), rtol=1e-12)


@pytest.mark.parametrize("method", METHODS)
def test_condition_number_isometry(method):
    Q, _ = np.linalg.qr(make_rng(2).standard_normal((6, 3)))
    s = condition_number(Q, method)
    assert s.kappa == pytest.approx(1.0, abs=1e-12)
    assert not s.infinite


@pytest.mark.parametrize("method", METHODS)
def test_condition_number_diagonal(method):
    assert condition_number(np.diag([4.0, 1.0]), method).kappa == pytest.approx(4.0)


def test_condition_number_near_singular_flags_infinite():
    M = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-13]])
    # oracle: determinant ~ 1e-13 against entries of size 1 means rank deficient at 1e-12 tolerance
    assert abs(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]) < 1e-12
    assert condition_number(M).infinite


def test_condition_number_zero_matrix_raises():
    with pytest.raises(LinalgError):
        condition_number(np.zeros((3, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_condition_number_scale_invariant(seed, c):
    M = make_rng(seed).standard_normal((5, 3))
    k1 = condition_number(M).kappa
    assert condition_number(c * M).kappa == pytest.approx(k1, rel=1e-9)
    assert k1 >= 1.0


def test_spectral_norm():
    M = make_rng(3).standard_normal((6, 6))
    assert spectral_norm(M) == pytest.approx(np.linalg.norm(M, 2), rel=1e-13)
    assert spectral_norm(M, "jacobi") == pytest.approx(np.linalg.norm(M, 2), rel=1e-12)


def test_pseudoinverse_norm_identity_and_diagonal():
    assert pseudoinverse_norm(np.eye(2)) == pytest.approx(1.0)
    assert pseudoinverse_norm(np.diag([2.0, 0.5])) == pytest.approx(2.0)


def test_pseudoinverse_norm_against_gram_eigenvalues():
    M = make_rng(4).standard_normal((5, 3))
    # oracle: sigma_min^2 is the smallest eigenvalue of M^T M
    sigma_min = np.sqrt(np.min(np.linalg.eigvalsh(M.T @ M)))
    assert pseudoinverse_norm(M) == pytest.approx(1.0 / sigma_min, rel=1e-10)
    assert pseudoinverse_norm(M) == pytest.approx(np.linalg.norm(np.linalg.pinv(M), 2), rel=1e-10)


def test_pseudoinverse_norm_rank_deficient_raises():
    with pytest.raises(LinalgError):
        pseudoinverse_norm(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]))


def test_singular_values_descending():
    s = singular_values(make_rng(5).standard_normal((4, 6)), "jacobi")
    assert np.all(np.diff(s) <= 0)

"""Small dense linear algebra: matvec, symmetric eigenvalues, SVD, conditioning.

Matrices are plain 2-D ``numpy`` float arrays. Two eigen/SVD backends are
available: LAPACK (through ``numpy.linalg``, the default) and cyclic Jacobi
rotations written here. The Jacobi routines are exact enough for every size
this package touches but get slow above a few hundred rows, so the fast path
stays the default and Jacobi serves as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LinalgError",
    "SpectralSummary",
    "as_matrix",
    "check_symmetric",
    "matvec",
    "jacobi_eigh",
    "jacobi_singular_values",
    "symmetric_eigenvalues",
    "singular_values",
    "spectral_norm",
    "condition_number",
    "pseudoinverse_norm",
]

SYMMETRY_RTOL = 1e-12
RANK_RTOL = 1e-12


class LinalgError(ValueError):
    """Raised on shape mismatch, asymmetric input or rank deficiency."""


@dataclass(frozen=True)
class SpectralSummary:
    """Extreme eigen/singular values and the resulting condition number.

    ``infinite`` is set when the smallest value is zero within the rank
    tolerance; ``kappa`` is then ``inf``.
    """

    min_value: float
    max_value: float
    kappa: float
    infinite: bool = False


def as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise LinalgError(f"expected a 2-D matrix, got shape {A.shape}")
    return A


def check_symmetric(A) -> np.ndarray:
    """Return ``A`` as a float matrix, raising if it is not symmetric.

    The tolerance is ``1e-12 * max(1, ||A||_F)`` entrywise. Asymmetric input
    is rejected, never symmetrized.
    """
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise LinalgError(f"symmetric matrix must be square, got {A.shape}")
    tol = SYMMETRY_RTOL * max(1.0, float(np.linalg.norm(A)))
    gap = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if gap > tol:
        raise LinalgError(f"matrix is not symmetric: max |A_ij - A_ji| = {gap:.3e} > {tol:.3e}")
    return A


def matvec(A, x) -> np.ndarray:
    A = as_matrix(A)
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise LinalgError(f"dimension mismatch: A is {A.shape}, x has shape {x.shape}")
    return A @ x


def _off_norm(A: np.ndarray) -> float:
    # summing the off-diagonal squares directly; |A|^2 - |diag|^2 cancels
    return float(np.linalg.norm(A - np.diag(np.diag(A))))


def jacobi_eigh(A, tol: float = 1e-14, max_sweeps: int = 100):
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    eigenvectors in the columns, so that ``A = V diag(lam) V^T``.
    """
    A = check_symmetric(A).copy()
    n = A.shape[0]
    V = np.eye(n)
    scale = max(float(np.linalg.norm(A)), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        if _off_norm(A) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                # Rutishauser's stable rotation
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q]
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :]
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise LinalgError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
    lam = np.diag(A).copy()
    order = np.argsort(lam, kind="stable")
    return lam[order], V[:, order]


def jacobi_singular_values(M, tol: float = 1e-15, max_sweeps: int = 100) -> np.ndarray:
    """Singular values (descending) by one-sided Jacobi (Hestenes) rotations."""
    M = as_matrix(M)
    U = (M.T if M.shape[0] < M.shape[1] else M).copy()
    n = U.shape[1]
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ui = U[:, i]
                uj = U[:, j]
                a = ui @ ui
                b = uj @ uj
                g = ui @ uj
                if abs(g) <= tol * np.sqrt(a * b) or g == 0.0:
                    continue
                rotated = True
                zeta = (b - a) / (2.0 * g)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                ui_old = ui.copy()
                U[:, i] = c * ui_old - s * uj
                U[:, j] = s * ui_old + c * U[:, j]
        if not rotated:
            break
    else:
        raise LinalgError(f"one-sided Jacobi SVD did not converge in {max_sweeps} sweeps")
    return np.sort(np.linalg.norm(U, axis=0))[::-1]


def symmetric_eigenvalues(A, method: str = "lapack", return_vectors: bool = False):
    """Eigenvalues of a symmetric matrix in ascending order.

    With ``return_vectors=True`` the pair ``(eigenvalues, V)`` is returned.
    ``method`` is ``"lapack"`` or ``"jacobi"``.
    """
    A = check_symmetric(A)
    if method == "jacobi":
        lam, V = jacobi_eigh(A)
    elif method == "lapack":
        lam, V = np.linalg.eigh(A)
    else:
        raise ValueError(f"unknown eigen method {method!r}")
    return (lam, V) if return_vectors else lam


def singular_values(M, method: str = "lapack") -> np.ndarray:
    """Singular values in descending order."""
    M = as_matrix(M)
    if method == "jacobi":
        return jacobi_singular_values(M)
    if method == "lapack":
        return np.linalg.svd(M, compute_uv=False)
    raise ValueError(f"unknown SVD method {method!r}")


def spectral_norm(M, method: str = "lapack") -> float:
    return float(singular_values(M, method)[0])


def condition_number(M, method: str = "lapack") -> SpectralSummary:
    """Spectral condition number ``sigma_max / sigma_min``.

    For symmetric positive definite input this equals
    ``lambda_max / lambda_min``. A matrix whose smallest singular value is at
    most ``1e-12 * sigma_max`` is reported with ``infinite=True``.
    """
    s = singular_values(M, method)
    smax = float(s[0]) if s.size else 0.0
    if smax == 0.0:
        raise LinalgError("condition number of the zero matrix is undefined")
    smin = float(s[-1])
    if smin <= RANK_RTOL * smax:
        return SpectralSummary(smin, smax, float("inf"), True)
    return SpectralSummary(smin, smax, smax / smin, False)


def pseudoinverse_norm(M, method: str = "lapack") -> float:
    """Spectral norm of the pseudoinverse, ``1 / sigma_min``, for full column rank M."""
    M = as_matrix(M)
    s = singular_values(M, method)
    if M.shape[0] < M.shape[1]:
        raise LinalgError(f"M has more columns than rows ({M.shape}); not full column rank")
    smax = float(s[0]) if s.size else 0.0
    smin = float(s[-1]) if s.size else 0.0
    if smax == 0.0 or smin <= RANK_RTOL * smax:
        raise LinalgError(
            f"M is rank deficient: sigma_min = {smin:.3e}, sigma_max = {smax:.3e}"
        )
    return 1.0 / smin

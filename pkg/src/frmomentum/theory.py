"""Numerical checks of the FRGD convergence results on quadratics.

Two results are checked here:

* descent and monotone decay: for a small enough fixed step,
  ``p_n^T r_n > 0`` and ``||r_n|| <= sqrt(1 - alpha lambda_min) ||r_{n-1}||``;
* a Krylov-type residual bound,
  ``||r_n|| <= 2 (1 + K_n) ((sqrt(kappa) - 1) / (sqrt(kappa) + 1))^n ||r_0||``,
  where ``K_n`` depends on how well conditioned the normalized residual basis
  ``Z_{n+1} = [r_0/||r_0||, ..., r_n/||r_n||]`` is.

On a quadratic the mean-value Hessian between consecutive iterates is ``A``
itself, which is why every checker takes the matrix directly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import LinalgError, check_symmetric, singular_values, symmetric_eigenvalues
from .objectives import QuadraticProblem
from .optimizers import FrState, frgd_step

__all__ = [
    "BASIS_RTOL",
    "ResidualHistory",
    "run_frgd",
    "theorem1_alpha_bound",
    "Theorem1Report",
    "theorem1_check",
    "Theorem2Row",
    "Theorem2Report",
    "theorem2_bound",
    "min_residual_polynomial",
    "polynomial_bound",
    "CgTrace",
    "cg_reference_solve",
]

# Z-basis counts as linearly independent when sigma_min > BASIS_RTOL * sigma_max.
BASIS_RTOL = 1e-10


def _g17(x) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True, eq=False)
class ResidualHistory:
    """Gradients ``r_0..r_n`` (rows) of a fixed-step run on a quadratic.

    ``directions`` holds ``p_0..p_{n-1}`` and ``betas`` the momentum
    coefficients used to form them.
    """

    residuals: np.ndarray
    directions: np.ndarray
    betas: np.ndarray
    alpha: float
    iterates: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return self.residuals.shape[0] - 1

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.residuals, axis=1)

    def consistency_error(self, A) -> float:
        """Largest relative defect in ``r_{k+1} = r_k - alpha A p_k``."""
        r, p = self.residuals, self.directions
        pred = r[:-1] - self.alpha * (p @ np.asarray(A).T)
        scale = np.maximum(np.linalg.norm(r[:-1], axis=1), np.finfo(float).tiny)
        return float(np.max(np.linalg.norm(r[1:] - pred, axis=1) / scale)) if len(p) else 0.0


def run_frgd(q: QuadraticProblem, w0, alpha: float, n_steps: int) -> ResidualHistory:
    """Run FRGD for ``n_steps`` steps, recording ``r_0..r_n`` and ``p_0..p_{n-1}``."""
    w = np.array(w0, dtype=float)
    state = FrState.zeros(q.dim)
    ws, rs, ps, betas = [w], [], [], []
    for _ in range(n_steps):
        r = q.gradient(w)
        rs.append(r)
        w, state, beta = frgd_step(w, r, state, alpha)
        if state.converged:
            break
        ps.append(state.p_prev)
        betas.append(beta)
        ws.append(w)
    rs.append(q.gradient(w))
    return ResidualHistory(
        np.array(rs), np.array(ps).reshape(len(ps), q.dim), np.array(betas), alpha, np.array(ws)
    )


# --------------------------------------------------------------------------
# Descent / monotone-decay check


def theorem1_alpha_bound(lambda_min, lambda_max, C, d, r0_norm, K) -> float:
    """Admissible step ``lambda_min / ((lambda_max^2 + 2 C d ||r_0||) K^2)``."""
    if lambda_min <= 0:
        raise ValueError("lambda_min must be positive (strong convexity hypothesis)")
    if K < 1 or C < 0 or d < 1:
        raise ValueError("need K >= 1, C >= 0, d >= 1")
    return lambda_min / ((lambda_max**2 + 2.0 * C * d * r0_norm) * K**2)


@dataclass
class Theorem1Report:
    """Descent flags for ``n = 0..K-1`` and decay ratios for ``n = 1..K``."""

    K: int
    alpha: float
    alpha_bound: float
    rate_ceiling: float
    descent: np.ndarray
    ratios: np.ndarray
    all_pass: bool

    @property
    def violations(self) -> int:
        bad_ratio = self.ratios > self.rate_ceiling + 1e-12
        return int(np.sum(~self.descent) + np.sum(bad_ratio))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["n", "descent", "ratio", "ceiling", "ratio_ok"])
            for n in range(1, self.K + 1):
                ratio = self.ratios[n - 1]
                out.writerow([
                    n, int(self.descent[n - 1]), _g17(ratio), _g17(self.rate_ceiling),
                    int(ratio <= self.rate_ceiling + 1e-12),
                ])

    def summary(self) -> str:
        status = "PASS" if self.all_pass else f"FAIL ({self.violations} violations)"
        return (
            f"descent/decay check over K={self.K}: alpha={self.alpha:.6g} "
            f"(admissible bound {self.alpha_bound:.6g}), ceiling={self.rate_ceiling:.15g}, "
            f"max ratio={np.max(self.ratios):.15g}: {status}"
        )


def theorem1_check(history: ResidualHistory, q: QuadraticProblem, K: int) -> Theorem1Report:
    """Check descent and the decay rate along a recorded FRGD run (C = 0)."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if history.n_steps < K or history.directions.shape[0] < K:
        raise ValueError(f"trace has {history.n_steps} steps, need at least K={K}")
    lam = symmetric_eigenvalues(q.A)
    lmin, lmax = float(lam[0]), float(lam[-1])
    norms = history.norms()
    bound = theorem1_alpha_bound(lmin, lmax, 0.0, q.dim, norms[0], K) if lmin > 0 else float("nan")
    ceiling = math.sqrt(max(0.0, 1.0 - history.alpha * lmin))
    r, p = history.residuals, history.directions
    descent = np.einsum("ij,ij->i", p[:K], r[:K]) > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = norms[1 : K + 1] / norms[:K]
    ok = bool(np.all(descent) and np.all(ratios <= ceiling + 1e-12))
    return Theorem1Report(K, history.alpha, bound, ceiling, descent, ratios, ok)


# --------------------------------------------------------------------------
# Krylov-type residual bound


@dataclass(frozen=True)
class Theorem2Row:
    n: int
    res_norm: float
    kappa_Z: float
    rho: float
    kn_stated: float
    kn_proof: float
    rate_term: float
    bound: float
    holds: bool
    degenerate: bool
    bound_proof: float = float("nan")


@dataclass
class Theorem2Report:
    """Per-iteration evaluation of the residual bound.

    ``kn_stated`` is ``n (1 + n rho / 2) ||A|| kappa(Z_{n+1})``; ``kn_proof``
    carries the extra factor ``alpha`` that appears in the derivation.
    ``bound`` and ``holds`` use the stated (larger, for alpha < 1) constant;
    ``bound_proof`` is reported alongside.
    """

    rows: list
    kappa_A: float
    norm_A: float
    alpha: float

    @property
    def all_hold(self) -> bool:
        return all(r.holds for r in self.rows if not r.degenerate)

    @property
    def violations(self) -> int:
        return sum(1 for r in self.rows if not r.degenerate and not r.holds)

    COLUMNS = ("n", "res_norm", "kappa_Z", "rho", "kn_stated", "kn_proof", "rate_term", "bound", "holds")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(self.COLUMNS)
            for r in self.rows:
                out.writerow([
                    r.n, _g17(r.res_norm), _g17(r.kappa_Z), _g17(r.rho), _g17(r.kn_stated),
                    _g17(r.kn_proof), _g17(r.rate_term), _g17(r.bound),
                    "degenerate" if r.degenerate else int(r.holds),
                ])

    def summary(self) -> str:
        lines = [
            f"residual bound check: kappa(A)={self.kappa_A:.6g}, ||A||={self.norm_A:.6g}, alpha={self.alpha:.6g}",
            f"{'n':>3} {'||r_n||':>12} {'kappa(Z)':>10} {'rho':>8} {'K_n':>11} {'bound':>11}  holds",
        ]
        for r in self.rows:
            flag = "degenerate" if r.degenerate else ("yes" if r.holds else "NO")
            lines.append(
                f"{r.n:>3} {r.res_norm:12.5e} {r.kappa_Z:10.4g} {r.rho:8.4g} "
                f"{r.kn_stated:11.4e} {r.bound:11.4e}  {flag}"
            )
        lines.append(f"violations: {self.violations}")
        return "\n".join(lines)


def _rho(sq_norms: np.ndarray, n: int) -> float:
    """max over 0 <= j < i <= n-1 of ||r_i||^2 / ||r_j||^2 (0 when the set is empty)."""
    if n < 2:
        return 0.0
    s = sq_norms[:n]
    # for each i the worst j < i is the smallest earlier norm
    running_min = np.minimum.accumulate(s)
    return float(np.max(s[1:] / running_min[:-1]))


def theorem2_bound(history: ResidualHistory, A, slack: float = 1e-10) -> Theorem2Report:
    """Evaluate the residual bound at every ``n`` of an FRGD history on SPD ``A``.

    ``n = 0`` is the base row with ``K_0 = 0``. Rows where the normalized
    residual basis is numerically dependent are flagged ``degenerate`` and
    not evaluated.
    """
    A = check_symmetric(A)
    lam = symmetric_eigenvalues(A)
    if lam[0] <= 0:
        raise LinalgError(f"A must be positive definite (lambda_min = {lam[0]:.3e})")
    kappa = float(lam[-1] / lam[0])
    norm_A = float(singular_values(A)[0])
    q = (math.sqrt(kappa) - 1.0) / (math.sqrt(kappa) + 1.0)
    R = history.residuals
    norms = np.linalg.norm(R, axis=1)
    if R.shape[0] < 2:
        raise ValueError("history needs at least two residuals")
    r0 = norms[0]
    Z = R / norms[:, None]
    rows = []
    for n in range(R.shape[0]):
        rate = q**n
        if n == 0:
            bound = 2.0 * r0
            rows.append(Theorem2Row(0, r0, 1.0, 0.0, 0.0, 0.0, 1.0, bound,
                                    bool(r0 <= bound + slack * r0), False, bound))
            continue
        s = singular_values(Z[: n + 1].T)
        degenerate = n + 1 > A.shape[0] or not np.isfinite(s).all() or s[-1] <= BASIS_RTOL * s[0]
        kappa_Z = float(s[0] / s[-1]) if not degenerate else float("inf")
        rho = _rho(norms**2, n)
        kn = n * (1.0 + n * rho / 2.0) * norm_A * kappa_Z
        kn_proof = history.alpha * kn
        bound = 2.0 * (1.0 + kn) * rate * r0
        holds = (not degenerate) and bool(norms[n] <= bound + slack * r0)
        rows.append(Theorem2Row(n, norms[n], kappa_Z, rho, kn, kn_proof, rate, bound, holds,
                                bool(degenerate), 2.0 * (1.0 + kn_proof) * rate * r0))
    return Theorem2Report(rows, kappa, norm_A, history.alpha)


def min_residual_polynomial(A, r0, n_max: int, breakdown_rtol: float = 1e-10):
    """``min ||p(A) r0||`` over degree-n polynomials with ``p(0) = 1``, n = 0..n_max.

    Solved as the least-squares problem ``min_y ||r0 - A V_n y||`` over an
    orthonormal (Arnoldi, twice re-orthogonalized) basis ``V_n`` of the
    Krylov space ``span{r0, A r0, ..., A^{n-1} r0}``. Returns
    ``(values, degenerate_at)``; when the Krylov space stops growing the
    list ends and ``degenerate_at`` is the first ``n`` that was not evaluated.
    """
    A = np.asarray(A, dtype=float)
    r0 = np.asarray(r0, dtype=float)
    beta0 = float(np.linalg.norm(r0))
    values = [beta0]
    if beta0 == 0.0:
        return values, 1 if n_max >= 1 else None
    V = [r0 / beta0]
    for n in range(1, n_max + 1):
        Vn = np.column_stack(V)
        W = A @ Vn
        y, *_ = np.linalg.lstsq(W, r0, rcond=None)
        values.append(float(np.linalg.norm(r0 - W @ y)))
        if n == n_max:
            break
        v = W[:, -1].copy()
        scale = float(np.linalg.norm(v))
        for _ in range(2):
            v -= Vn @ (Vn.T @ v)
        h = float(np.linalg.norm(v))
        if scale == 0.0 or h <= breakdown_rtol * scale:
            return values, n + 1
        V.append(v / h)
    return values, None


@dataclass
class PolynomialBound:
    """``(1 + K_n) * min_p ||p(A) r_0||`` per ``n`` (None where undefined)."""

    min_poly: list
    bound: list
    degenerate_at: int | None = None
    rows: list = field(default_factory=list)


def polynomial_bound(history: ResidualHistory, A) -> PolynomialBound:
    """Polynomial form of the residual bound; needs only symmetric ``A``.

    ``K_n`` uses the stated constant from :func:`theorem2_bound` but is
    computed without the positive-definiteness requirement.
    """
    A = check_symmetric(A)
    R = history.residuals
    norms = np.linalg.norm(R, axis=1)
    n_max = R.shape[0] - 1
    mins, degenerate_at = min_residual_polynomial(A, R[0], n_max)
    norm_A = float(singular_values(A)[0])
    Z = R / norms[:, None]
    out = []
    for n, m in enumerate(mins):
        if n == 0:
            out.append(m)
            continue
        s = singular_values(Z[: n + 1].T)
        if n + 1 > A.shape[0] or s[-1] <= BASIS_RTOL * s[0]:
            out.append(None)
            continue
        kn = n * (1.0 + n * _rho(norms**2, n) / 2.0) * norm_A * float(s[0] / s[-1])
        out.append((1.0 + kn) * m)
    out += [None] * (n_max + 1 - len(out))
    return PolynomialBound(mins, out, degenerate_at)


# --------------------------------------------------------------------------
# Textbook linear CG


@dataclass
class CgTrace:
    """Iterates of linear CG; residuals use the gradient sign ``A w - b``."""

    iterates: np.ndarray
    residuals: np.ndarray
    directions: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    converged: bool

    def history(self) -> ResidualHistory:
        return ResidualHistory(self.residuals, self.directions, self.betas, float("nan"), self.iterates)


def cg_reference_solve(q: QuadraticProblem, w0=None, tol: float = 1e-10, maxiter: int | None = None) -> CgTrace:
    """Hestenes-Stiefel conjugate gradients for ``A w = b``.

    Stops once ``||r|| <= tol * ||r_0||``. Raises :class:`LinalgError` when a
    direction with ``p^T A p <= 0`` shows that A is not positive definite.
    """
    A, b = q.A, q.b
    x = np.zeros(q.dim) if w0 is None else np.array(w0, dtype=float)
    maxiter = 2 * q.dim if maxiter is None else maxiter
    r = b - A @ x
    p = r.copy()
    rr = float(r @ r)
    r0 = math.sqrt(rr)
    xs, rs, ps, alphas, betas = [x.copy()], [-r], [], [], []
    converged = r0 == 0.0
    for _ in range(maxiter):
        if converged:
            break
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise LinalgError(f"p^T A p = {pAp:.3e} <= 0: matrix is not positive definite")
        a = rr / pAp
        x = x + a * p
        r = r - a * Ap
        rr_new = float(r @ r)
        xs.append(x.copy())
        rs.append(-r)
        ps.append(-p)
        alphas.append(a)
        if math.sqrt(rr_new) <= tol * r0:
            converged = True
            break
        beta = rr_new / rr
        betas.append(beta)
        p = r + beta * p
        rr = rr_new
    return CgTrace(np.array(xs), np.array(rs), np.array(ps).reshape(-1, q.dim),
                   np.array(alphas), np.array(betas), converged)

"""First-order methods as single-step state machines.

Every stepper is a pure function ``(w, gradient information, state, rate)
-> (w', state', ...)``; states are immutable dataclasses holding numpy
arrays, so a run can be replayed or forked at any step.

Sign convention throughout: directions ``p`` point uphill and the position
update is ``w - alpha * p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .objectives import FiniteSumObjective, QuadraticProblem, minibatch_gradient

__all__ = [
    "BETA_GUARD",
    "LineSearchError",
    "MomentumState",
    "FrState",
    "AdamState",
    "StepDecaySchedule",
    "LineSearchResult",
    "fr_beta",
    "gd_step",
    "momentum_step",
    "lookahead_point",
    "nesterov_step",
    "nag_beta",
    "frgd_step",
    "frsgd_step",
    "exact_quadratic_line_search",
    "armijo_line_search",
    "ncg_fr_step",
    "adam_step",
    "heavyball_optimal_preset",
    "schedule_rate",
    "FRSGD_240_EPOCH_SCHEDULE",
    "SGD_200_EPOCH_SCHEDULE",
    "epoch_batches",
    "Optimizer",
    "make_optimizer",
]

# Squared-norm threshold below which the previous gradient counts as vanished.
BETA_GUARD = 1e-24


class LineSearchError(RuntimeError):
    """No acceptable step found; ``diagnostics`` holds the search history."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite value passed to optimizer step")


@dataclass(frozen=True, eq=False)
class MomentumState:
    p_prev: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, dim: int):
        return cls(np.zeros(dim))


@dataclass(frozen=True, eq=False)
class FrState:
    """Carry state for Fletcher-Reeves momentum.

    ``prev_grad_sq`` is ``r_{n-1}^T r_{n-1}``; it is ignored on step 0 where
    the coefficient is forced to zero.
    """

    p_prev: np.ndarray
    prev_grad_sq: float = 0.0
    step_count: int = 0
    converged: bool = False

    @classmethod
    def zeros(cls, dim: int):
        return cls(np.zeros(dim))


@dataclass(frozen=True, eq=False)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, dim: int, **kw):
        return cls(np.zeros(dim), np.zeros(dim), **kw)


@dataclass(frozen=True)
class StepDecaySchedule:
    """Piecewise-constant rate divided by a fixed factor at milestone epochs."""

    initial_rate: float
    milestones: tuple = ()
    decay_factor: float = 0.1

    def __post_init__(self):
        if not self.initial_rate > 0:
            raise ValueError("initial_rate must be positive")
        ms = tuple(int(m) for m in self.milestones)
        if list(ms) != sorted(ms):
            raise ValueError(f"milestones must be ascending, got {ms}")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must lie in (0, 1]")
        object.__setattr__(self, "milestones", ms)

    def rate(self, epoch: int) -> float:
        return schedule_rate(self, epoch)

    def rescaled(self, from_budget: int, to_budget: int) -> "StepDecaySchedule":
        """Same schedule with milestones moved proportionally to a new epoch budget."""
        ms = tuple(int(round(m * to_budget / from_budget)) for m in self.milestones)
        return replace(self, milestones=ms)


def schedule_rate(s: StepDecaySchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    drops = sum(1 for m in s.milestones if m <= epoch)
    return s.initial_rate * s.decay_factor**drops


# Training recipes: 240 epochs for FRSGD, 200 for SGD with momentum.
FRSGD_240_EPOCH_SCHEDULE = StepDecaySchedule(0.5, (180, 220, 230), 0.1)
SGD_200_EPOCH_SCHEDULE = StepDecaySchedule(0.1, (80, 120, 160), 0.1)


@dataclass(frozen=True)
class LineSearchResult:
    alpha: float
    evaluations: int
    converged: bool


def fr_beta(grad_sq_now: float, grad_sq_prev: float, guard: float = BETA_GUARD) -> float:
    """Fletcher-Reeves ratio; 0 when the previous gradient has vanished."""
    if grad_sq_now < 0 or grad_sq_prev < 0:
        raise ValueError("squared gradient norms must be non-negative")
    if grad_sq_prev < guard:
        return 0.0
    return grad_sq_now / grad_sq_prev


def gd_step(w, grad, alpha: float) -> np.ndarray:
    if not alpha > 0:
        raise ValueError("step size must be positive")
    _finite(grad)
    return w - alpha * grad


def momentum_step(w, grad, state: MomentumState, alpha: float, beta: float):
    """Heavy-ball step: ``p = beta p_prev + grad``, ``w' = w - alpha p``."""
    if not alpha > 0 or beta < 0:
        raise ValueError("need alpha > 0 and beta >= 0")
    _finite(w, grad)
    p = beta * state.p_prev + grad
    return w - alpha * p, MomentumState(p, state.step_count + 1)


def lookahead_point(w, state: MomentumState, alpha: float) -> np.ndarray:
    """Point ``w - alpha p_prev`` where the Nesterov gradient is evaluated."""
    return w - alpha * state.p_prev


def nesterov_step(w, grad_at_lookahead, state: MomentumState, alpha: float, beta: float):
    """Nesterov step; the gradient must come from :func:`lookahead_point`."""
    return momentum_step(w, grad_at_lookahead, state, alpha, beta)


def nag_beta(n: int) -> float:
    """Iteration-dependent momentum n / (n + 3) of accelerated gradient."""
    return n / (n + 3.0)


def frgd_step(w, grad, state: FrState, alpha: float, restart_every: int | None = None):
    """One FRGD step. Returns ``(w', state', beta_n)``.

    On step 0 the coefficient is zero and ``p_0 = r_0``. If the previous
    squared gradient norm is below :data:`BETA_GUARD` the run is declared
    converged: ``w`` is returned unchanged with ``state'.converged`` set.
    ``restart_every`` (off by default) zeroes the coefficient every k steps.
    """
    if not alpha > 0:
        raise ValueError("step size must be positive")
    _finite(w, grad)
    g2 = float(grad @ grad)
    n = state.step_count
    if n == 0 or (restart_every and n % restart_every == 0):
        beta = 0.0
    elif state.prev_grad_sq < BETA_GUARD:
        return w, replace(state, converged=True), 0.0
    else:
        beta = fr_beta(g2, state.prev_grad_sq)
    p = grad + beta * state.p_prev
    return w - alpha * p, FrState(p, g2, n + 1), beta


def frsgd_step(w, obj: FiniteSumObjective, batch, state: FrState, alpha: float, **kw):
    """FRGD step driven by the mini-batch gradient over ``batch``."""
    return frgd_step(w, minibatch_gradient(obj, w, batch), state, alpha, **kw)


def exact_quadratic_line_search(q: QuadraticProblem, w, p, r=None) -> LineSearchResult:
    """Minimizer of ``f(w - alpha p)`` for a quadratic: ``p^T r / p^T A p``."""
    r = q.gradient(w) if r is None else r
    curvature = float(p @ (q.A @ p))
    if curvature <= 0:
        raise LineSearchError(
            "direction has non-positive curvature; quadratic line search unbounded",
            {"pAp": curvature, "pr": float(p @ r)},
        )
    return LineSearchResult(float(p @ r) / curvature, 0, True)


def armijo_line_search(
    f: Callable, w, p, r, f0: float | None = None,
    c: float = 1e-4, shrink: float = 0.5, alpha0: float = 1.0, max_halvings: int = 50,
) -> LineSearchResult:
    """Backtracking until ``f(w - a p) <= f(w) - c a r^T p``."""
    slope = float(r @ p)
    f0 = f(w) if f0 is None else f0
    if slope <= 0:
        raise LineSearchError("p is not a descent direction (r^T p <= 0)", {"slope": slope, "f0": f0})
    alpha = alpha0
    trials = []
    for k in range(max_halvings + 1):
        fa = f(w - alpha * p)
        trials.append((alpha, fa))
        if np.isfinite(fa) and fa <= f0 - c * alpha * slope:
            return LineSearchResult(alpha, k + 1, True)
        alpha *= shrink
    raise LineSearchError(
        f"Armijo search found no decrease after {max_halvings} halvings",
        {"f0": f0, "slope": slope, "trials": trials},
    )


def ncg_fr_step(w, obj, state: FrState, line_search: str = "auto"):
    """Fletcher-Reeves nonlinear CG step with a line search.

    ``line_search`` is ``"exact"`` (quadratics only), ``"armijo"`` or
    ``"auto"`` (exact when ``obj`` is a :class:`QuadraticProblem`).
    Returns ``(w', state', LineSearchResult)``.
    """
    r = obj.gradient(w)
    _finite(w, r)
    g2 = float(r @ r)
    n = state.step_count
    if g2 == 0.0 or (n > 0 and state.prev_grad_sq < BETA_GUARD):
        return w, replace(state, converged=True), LineSearchResult(0.0, 0, True)
    beta = 0.0 if n == 0 else fr_beta(g2, state.prev_grad_sq)
    p = r + beta * state.p_prev
    if line_search == "auto":
        line_search = "exact" if isinstance(obj, QuadraticProblem) else "armijo"
    if line_search == "exact":
        if not isinstance(obj, QuadraticProblem):
            raise TypeError("exact line search needs a QuadraticProblem")
        ls = exact_quadratic_line_search(obj, w, p, r)
    elif line_search == "armijo":
        ls = armijo_line_search(obj.value, w, p, r)
    else:
        raise ValueError(f"unknown line search {line_search!r}")
    return w - ls.alpha * p, FrState(p, g2, n + 1), ls


def adam_step(w, grad, state: AdamState, alpha: float):
    if not alpha > 0:
        raise ValueError("step size must be positive")
    _finite(w, grad)
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    w_new = w - alpha * m_hat / (np.sqrt(v_hat) + state.eps)
    return w_new, replace(state, first_moment=m, second_moment=v, step_count=t)


def heavyball_optimal_preset(lambda_min: float, lambda_max: float):
    """Optimal constant (alpha, beta) of heavy-ball momentum on a quadratic."""
    if not 0 < lambda_min <= lambda_max:
        raise ValueError("need 0 < lambda_min <= lambda_max")
    sa, sb = math.sqrt(lambda_max), math.sqrt(lambda_min)
    return 4.0 / (sa + sb) ** 2, ((sa - sb) / (sa + sb)) ** 2


def epoch_batches(rng: np.random.Generator, n: int, batch_size: int):
    """Contiguous batches of one seeded permutation of ``range(n)``."""
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


# --------------------------------------------------------------------------
# Uniform driver interface used by the harness and the training loops.


@dataclass
class Optimizer:
    """A named stepper with fixed hyperparameters.

    ``step(w, grad_fn, state, lr)`` evaluates ``grad_fn`` where the method
    needs it (the lookahead point for Nesterov) and returns
    ``(w', state', beta_n)``.
    """

    name: str
    beta: float | None = None
    restart_every: int | None = None
    adam: dict = field(default_factory=dict)

    def init(self, dim: int):
        if self.name in ("frgd", "frsgd"):
            return FrState.zeros(dim)
        if self.name == "adam":
            return AdamState.zeros(dim, **self.adam)
        return MomentumState.zeros(dim)

    def step(self, w, grad_fn, state, lr):
        name = self.name
        if name == "gd":
            return gd_step(w, grad_fn(w), lr), MomentumState(state.p_prev, state.step_count + 1), 0.0
        if name == "momentum":
            w_new, st = momentum_step(w, grad_fn(w), state, lr, self.beta)
            return w_new, st, self.beta
        if name in ("nesterov", "nag"):
            beta = self.beta if name == "nesterov" else nag_beta(state.step_count)
            g = grad_fn(lookahead_point(w, state, lr))
            w_new, st = nesterov_step(w, g, state, lr, beta)
            return w_new, st, beta
        if name in ("frgd", "frsgd"):
            return frgd_step(w, grad_fn(w), state, lr, restart_every=self.restart_every)
        if name == "adam":
            w_new, st = adam_step(w, grad_fn(w), state, lr)
            return w_new, st, 0.0
        raise ValueError(f"unknown optimizer {name!r}")


OPTIMIZER_NAMES = ("gd", "momentum", "nesterov", "nag", "frgd", "frsgd", "adam")


def make_optimizer(name: str, beta: float | None = None, **kw) -> Optimizer:
    if name not in OPTIMIZER_NAMES:
        raise ValueError(f"unknown optimizer {name!r}; choose from {', '.join(OPTIMIZER_NAMES)}")
    if name in ("momentum", "nesterov"):
        beta = 0.9 if beta is None else float(beta)
        if beta < 0:
            raise ValueError("momentum beta must be non-negative")
    elif beta is not None:
        raise ValueError(f"optimizer {name!r} takes no beta")
    return Optimizer(name, beta, kw.pop("restart_every", None), kw)

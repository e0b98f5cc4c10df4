"""Built-in acceptance suite.

Each ``criterion_k`` runs one end-to-end check at its stated tolerance and
returns a :class:`CriterionResult`. ``run_all`` runs them in order; the CLI
``verify`` verb and ``tests/test_acceptance.py`` both go through it.
Experiments that produce CSVs write them under ``out_dir`` so the
determinism check can compare bytes across reruns.
"""

from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import adversarial as adv
from . import harness
from .linalg import symmetric_eigenvalues
from .objectives import (
    LogisticRegression,
    MlpModel,
    MlpObjective,
    QuadraticProblem,
    QuadraticSum,
    cycle500_problem,
    finite_difference_gradient,
    gaussian_blobs,
    make_rng,
    random_spd_problem,
    two_moons,
)
from .optimizers import FrState, StepDecaySchedule, make_optimizer, ncg_fr_step
from .theory import cg_reference_solve, run_frgd, theorem1_alpha_bound, theorem1_check, theorem2_bound

__all__ = ["CriterionResult", "CRITERIA", "run_all", "cycle500_config", "two_moons_config",
           "frgd_reference_trace", "adversarial_pair"]


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    theorem: bool = False

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} criterion {self.number} ({self.title}) [{self.seconds:.1f}s]: {self.detail}"


def _timed(number, title, theorem=False):
    def wrap(fn):
        def run(out_dir=None):
            t0 = time.perf_counter()
            passed, detail = fn(Path(out_dir) if out_dir else None)
            return CriterionResult(number, title, bool(passed), detail, time.perf_counter() - t0, theorem)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


def _out(out_dir, name) -> Path:
    if out_dir is None:
        out_dir = Path(tempfile.mkdtemp(prefix="frm-accept-"))
    path = Path(out_dir) / name
    path.mkdir(parents=True, exist_ok=True)
    return path


# --------------------------------------------------------------------------
# 1. Cycle-Laplacian ordering and reference trace


def cycle500_config(budget: int = 1000) -> harness.ExperimentConfig:
    return harness.parse_config({
        "name": "cycle500", "kind": "quadratic", "budget": budget, "seeds": [1],
        "problem": {"preset": "cycle500"},
        "optimizer": [
            {"name": "gd", "alpha": 0.25},
            {"name": "momentum", "alpha": 0.25, "beta": 0.9},
            {"name": "nag", "alpha": 0.25},
            {"name": "frgd", "alpha": 0.25},
        ],
    })


def frgd_reference_trace(d: int = 500, alpha: float = 0.25, n_steps: int = 1000) -> np.ndarray:
    """f(w_0..w_n) for FRGD on the cycle Laplacian with b = e_1, written out longhand.

    Kept separate from the library on purpose: neighbours are gathered by
    index arrays, the objective is assembled from its edge sum, and the
    recurrence is spelled out inline.
    """
    left = (np.arange(d) - 1) % d
    right = (np.arange(d) + 1) % d
    b = np.zeros(d)
    b[0] = 1.0

    def f(x):
        return 0.5 * float(np.sum((x - x[right]) ** 2)) - x[0]

    x = np.zeros(d)
    p = np.zeros(d)
    prev = None
    out = [f(x)]
    for _ in range(n_steps):
        r = 2.0 * x - x[left] - x[right] - b
        rr = float(np.dot(r, r))
        beta = 0.0 if prev is None else rr / prev
        p = r + beta * p
        x = x - alpha * p
        prev = rr
        out.append(f(x))
    return np.array(out)


@_timed(1, "cycle-Laplacian ordering and FRGD reference trace")
def criterion_1(out_dir):
    cfg = cycle500_config()
    res = harness.run_experiment(cfg, out_dir=_out(out_dir, "c1_cycle500"))
    final = {c.label: c.records[-1].f_value for c in res.cells}
    order = final["frgd"] < final["nag"] < final["momentum"] < final["gd"]
    frgd = next(c for c in res.cells if c.label == "frgd")
    got = np.array([r.f_value for r in frgd.records])
    ref = frgd_reference_trace()
    if got.shape != ref.shape:
        return False, f"trace length {got.shape[0]} != {ref.shape[0]}"
    # log-loss: f is unbounded below here, so the trace is log10 |f_n| for n >= 1
    a, b = np.log10(np.abs(got[1:])), np.log10(np.abs(ref[1:]))
    rms = float(np.linalg.norm(a - b) / np.linalg.norm(b))
    ok = order and rms <= 0.05
    vals = ", ".join(f"{k}={v:.4f}" for k, v in final.items())
    return ok, f"final f: {vals}; ordering {'holds' if order else 'violated'}; log-loss RMS rel diff {rms:.2e} (<= 0.05)"


# --------------------------------------------------------------------------
# 2. FR nonlinear CG with exact line search equals linear CG


def _ncg_iterates(q: QuadraticProblem, max_steps: int, tol: float):
    w = np.zeros(q.dim)
    r0 = float(np.linalg.norm(q.gradient(w)))
    state = FrState.zeros(q.dim)
    ws = [w]
    for _ in range(max_steps):
        if np.linalg.norm(q.gradient(w)) <= tol * r0:
            break
        w, state, _ = ncg_fr_step(w, q, state, "exact")
        ws.append(w)
    return np.array(ws), float(np.linalg.norm(q.gradient(w))) / r0


@_timed(2, "FR-NCG with exact line search equals textbook CG")
def criterion_2(out_dir, n_systems: int = 20, d: int = 20, seed: int = 2):
    rng = make_rng(seed)
    worst_dev, worst_iters, failures = 0.0, 0, []
    for k in range(n_systems):
        kappa = 10 ** rng.uniform(1.0, 4.0)
        q = random_spd_problem(d, kappa, rng)
        cg = cg_reference_solve(q, tol=1e-10, maxiter=d + 2)
        ws, rel = _ncg_iterates(q, d + 2, 1e-10)
        m = min(len(ws), len(cg.iterates))
        scale = np.maximum(np.linalg.norm(cg.iterates[:m], axis=1), np.finfo(float).tiny)
        dev = np.linalg.norm(ws[:m] - cg.iterates[:m], axis=1) / scale
        dev[0] = 0.0  # both start at the origin
        worst_dev = max(worst_dev, float(dev.max()))
        worst_iters = max(worst_iters, len(ws) - 1)
        if dev.max() > 1e-8 or rel > 1e-10:
            failures.append(f"system {k} (kappa={kappa:.3g}): dev={dev.max():.2e}, ||r||/||r0||={rel:.2e}")
    detail = f"max per-iterate rel dev {worst_dev:.2e} (<= 1e-8), max iterations {worst_iters} (<= {d + 2})"
    if failures:
        detail += "; " + "; ".join(failures[:3])
    return not failures, detail


# --------------------------------------------------------------------------
# 3/4. Convergence guarantees


def _theorem1_instances(n=50, seed=3):
    rng = make_rng(seed)
    for _ in range(n):
        d = int(rng.integers(2, 51))
        q = random_spd_problem(d, 10 ** rng.uniform(0.3, 3.0), rng)
        yield q, rng.standard_normal(d)


@_timed(3, "descent and monotone decay at the admissible step", theorem=True)
def criterion_3(out_dir, K: int = 30):
    viol, count, worst = 0, 0, -math.inf
    for q, w0 in _theorem1_instances():
        lam = symmetric_eigenvalues(q.A)
        alpha = theorem1_alpha_bound(lam[0], lam[-1], 0.0, q.dim, float(np.linalg.norm(q.gradient(w0))), K)
        rep = theorem1_check(run_frgd(q, w0, alpha, K), q, K)
        viol += rep.violations
        count += 1
        worst = max(worst, float(np.max(rep.ratios) - rep.rate_ceiling))
    return viol == 0, f"{count} problems, {viol} violations; max(ratio - ceiling) = {worst:.3e}"


@_timed(4, "Krylov-type residual bound", theorem=True)
def criterion_4(out_dir, n_problems: int = 20, d: int = 30, steps: int = 20, seed: int = 4):
    rng = make_rng(seed)
    viol = rows = degenerate = 0
    tightest = 0.0
    for _ in range(n_problems):
        q = random_spd_problem(d, 10 ** rng.uniform(1.0, 3.0), rng)
        w0 = rng.standard_normal(d)
        lmax = symmetric_eigenvalues(q.A)[-1]
        rep = theorem2_bound(run_frgd(q, w0, 1.0 / lmax, steps), q.A)
        viol += rep.violations
        for r in rep.rows:
            if r.degenerate:
                degenerate += 1
            else:
                rows += 1
                tightest = max(tightest, r.res_norm / r.bound)
    return viol == 0, (f"{n_problems} problems, {rows} rows checked, {degenerate} degenerate rows skipped, "
                       f"{viol} violations; max ||r_n||/bound = {tightest:.3e}")


# --------------------------------------------------------------------------
# 5. Gradients against central differences


def _grad_cases(rng):
    q = random_spd_problem(8, 50.0, rng)
    yield "quadratic", q.value, q.gradient, 8
    ex = cycle500_problem()
    yield "cycle-laplacian", ex.value, ex.gradient, 500
    qs = QuadraticSum([random_spd_problem(6, 10.0, rng) for _ in range(4)])
    yield "quadratic-sum", qs.value, qs.gradient, 6
    X = rng.standard_normal((40, 5))
    lr = LogisticRegression(X, (X @ rng.standard_normal(5) > 0).astype(int))
    yield "logistic", lr.value, lr.gradient, 5
    moons = MlpObjective(MlpModel((2, 16, 16, 2)), two_moons(60, 0.1, 0, False))
    yield "mlp-two-moons", moons.value, moons.gradient, moons.model.n_params
    blobs = MlpObjective(MlpModel((16, 12, 4), "relu"), gaussian_blobs(40, 16, 4, seed=1))
    yield "mlp-blobs-relu", blobs.value, blobs.gradient, blobs.model.n_params
    m = moons.model
    w = m.init_params(rng)
    X, y = moons.data.inputs[:5], moons.data.labels[:5]
    yield ("mlp-input", lambda x: float(np.sum([m.loss(w, x.reshape(5, 2)[i:i + 1], y[i:i + 1]) for i in range(5)])),
           lambda x: m.input_gradient(w, x.reshape(5, 2), y).ravel(), 10)


@_timed(5, "analytic gradients match central differences")
def criterion_5(out_dir, points: int = 10, seed: int = 5):
    rng = make_rng(seed)
    worst = {}
    for name, f, g, dim in _grad_cases(rng):
        err = 0.0
        for _ in range(points):
            w = rng.standard_normal(dim) * 0.5
            fd = finite_difference_gradient(f, w, h=1e-5)
            an = g(w)
            err = max(err, float(np.linalg.norm(an - fd) / max(np.linalg.norm(fd), 1e-12)))
        worst[name] = err
    ok = all(e <= 1e-4 for e in worst.values())
    return ok, "max rel error " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + " (<= 1e-4)"


# --------------------------------------------------------------------------
# 6. Two-moons training comparison


def two_moons_config(budget: int = 100, constant_rate: float | None = None) -> harness.ExperimentConfig:
    """FRSGD vs momentum(0.9), each on its original schedule rescaled to ``budget`` epochs.

    With ``constant_rate`` both methods use that fixed rate instead.
    """
    if constant_rate is None:
        frs = {"schedule": {"preset": "frsgd_240"}}
        mom = {"schedule": {"preset": "sgd_200"}}
    else:
        frs = mom = {"alpha": constant_rate}
    return harness.parse_config({
        "name": "two_moons", "kind": "finite_sum", "budget": budget, "seeds": [1, 2, 3, 4, 5],
        "problem": {"dataset": "two_moons", "n_samples": 200, "noise": 0.1, "data_seed": 0,
                    "widths": [2, 16, 16, 2], "batch_size": 20},
        "optimizer": [{"name": "frsgd", **frs}, {"name": "momentum", "beta": 0.9, **mom}],
    })


@_timed(6, "two-moons final training loss, FRSGD vs momentum")
def criterion_6(out_dir):
    res = harness.run_experiment(two_moons_config(), out_dir=_out(out_dir, "c6_schedules"))
    mean = {r.optimizer: r.mean for r in res.summary if r.metric == "final_loss"}
    loss_ok = mean["frsgd"] <= 1.05 * mean["momentum"]
    hot = harness.run_experiment(two_moons_config(constant_rate=0.5), out_dir=_out(out_dir, "c6_rate05"))
    frsgd_finite = all(
        not c.diverged and all(math.isfinite(r.f_value) for r in c.records)
        for c in hot.cells if c.label == "frsgd"
    )
    mom_div = sum(c.diverged for c in hot.cells if c.label == "momentum")
    detail = (f"mean final loss frsgd={mean['frsgd']:.4g} vs 1.05 x momentum={1.05 * mean['momentum']:.4g} "
              f"({'ok' if loss_ok else 'exceeds'}); at rate 0.5 frsgd traces "
              f"{'finite' if frsgd_finite else 'NOT finite'}, momentum diverged on {mom_div}/5 seeds")
    return loss_ok and frsgd_finite, detail


# --------------------------------------------------------------------------
# 7. Attack invariants and adversarial training


ADV_CLIP = (-3.0, 3.0)
ADV_EPS = 0.1


def _fit(model, data, inner_cfg, seed, epochs=100, rate=0.1, batch_size=20):
    rng = make_rng(seed)
    w = model.init_params(rng)
    opt = make_optimizer("nesterov", beta=0.9)
    state = opt.init(model.n_params)
    sched = StepDecaySchedule(rate, (epochs // 2, (3 * epochs) // 4))
    for epoch in range(epochs):
        w, state, _ = adv.adversarial_training_epoch(model, w, data, inner_cfg, opt, state, sched,
                                                     epoch, rng, batch_size)
    return w


def adversarial_pair(seed: int, epochs: int = 100, out_dir=None):
    """Train natural and adversarial twins from ``seed``; return their robustness rows."""
    model = MlpModel((2, 16, 16, 2))
    train = two_moons(200, 0.1, 0, False)
    test = two_moons(500, 0.1, 1, False)
    lo, hi = ADV_CLIP
    inner = adv.AttackConfig(ADV_EPS, ADV_EPS / 4, 10, lo, hi)
    attacks = [
        ("natural", "none", None),
        ("fgsm", "fgsm", adv.AttackConfig(ADV_EPS, ADV_EPS, 1, lo, hi)),
        ("ifgsm10", "ifgsm", adv.AttackConfig(ADV_EPS, ADV_EPS / 8, 10, lo, hi)),
    ]
    out = {}
    for kind, cfg in (("natural", None), ("adversarial", inner)):
        w = _fit(model, train, cfg, seed, epochs)
        out[kind] = adv.robustness_report(model, w, test, attacks)
        if out_dir is not None:
            adv.write_robustness_csv(out[kind], Path(out_dir) / f"{kind}__seed{seed}.csv")
    return out


def _random_attack_invariants(rng, n_attacks=1000):
    model = MlpModel((2, 8, 2))
    bad = 0
    for _ in range(n_attacks):
        lo = rng.uniform(-2.0, 0.0)
        hi = lo + rng.uniform(0.5, 3.0)
        eps = rng.uniform(0.0, 0.5)
        cfg = adv.AttackConfig(eps, rng.uniform(0.0, eps), int(rng.integers(1, 21)), lo, hi)
        w = model.init_params(rng) * rng.uniform(0.5, 5.0)
        x = rng.uniform(lo, hi, size=2)
        ex = adv.ifgsm_attack(model, w, x, int(rng.integers(0, 2)), cfg)
        dev = np.max(np.abs(ex.perturbed - x))
        if dev > eps + 1e-12 or np.any(ex.perturbed < lo) or np.any(ex.perturbed > hi):
            bad += 1
    return bad


@_timed(7, "attack invariants and adversarial training")
def criterion_7(out_dir, seeds=(1, 2, 3, 4, 5)):
    bad = _random_attack_invariants(make_rng(7))
    model = MlpModel((2, 16, 16, 2))
    train = two_moons(200, 0.1, 0, False)
    zero = adv.AttackConfig(0.0, 0.0, 10, *ADV_CLIP)
    identical = _fit(model, train, None, 11, epochs=5).tobytes() == _fit(model, train, zero, 11, epochs=5).tobytes()
    d = _out(out_dir, "c7_robustness")
    wins, pairs = 0, []
    for s in seeds:
        rows = adversarial_pair(s, out_dir=d)
        nat = next(r.accuracy for r in rows["natural"] if r.attack_name == "ifgsm10")
        rob = next(r.accuracy for r in rows["adversarial"] if r.attack_name == "ifgsm10")
        wins += rob > nat
        pairs.append(f"{nat:.3f}/{rob:.3f}")
    ok = bad == 0 and identical and wins > len(seeds) // 2
    return ok, (f"{bad}/1000 invariant violations; eps=0 training bit-identical: {identical}; "
                f"IFGSM10 accuracy natural/adversarial per seed {', '.join(pairs)} -> {wins}/{len(seeds)} wins")


# --------------------------------------------------------------------------
# 8. Determinism


def _same_tree(a: Path, b: Path):
    files_a = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    files_b = sorted(p.relative_to(b) for p in b.rglob("*.csv"))
    if files_a != files_b:
        return False, len(files_a)
    _, mismatch, errors = filecmp.cmpfiles(a, b, [str(f) for f in files_a], shallow=False)
    return not mismatch and not errors, len(files_a)


@_timed(8, "byte-identical CSVs on rerun")
def criterion_8(out_dir):
    base = _out(out_dir, "c8_determinism")
    runs = []
    for tag, workers in (("first", 1), ("second", 1), ("parallel", 2)):
        root = base / tag
        harness.run_experiment(cycle500_config(200), out_dir=root / "cycle500", workers=workers)
        harness.run_experiment(replace(two_moons_config(20), seeds=(1, 2)), out_dir=root / "two_moons",
                               workers=workers)
        harness.run_experiment(
            harness.parse_config({"name": "t2", "kind": "theorem_check", "budget": 1, "seeds": [1, 2],
                                  "problem": {"theorem": 2, "dim": 12, "steps": 10}}),
            out_dir=root / "theorem2", workers=workers)
        if tag != "parallel":
            adversarial_pair(1, epochs=10, out_dir=_out(root, "robustness"))
        runs.append(root)
    same_rerun, n = _same_tree(runs[0], runs[1])
    same_parallel = all(_same_tree(runs[0] / sub, runs[2] / sub)[0]
                        for sub in ("cycle500", "two_moons", "theorem2"))
    return same_rerun and same_parallel, (f"{n} CSV files byte-identical on rerun: {same_rerun}; "
                                          f"single vs 2-worker identical: {same_parallel}")


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8)


def run_all(out_dir=None, only=None) -> list:
    results = []
    for k, fn in enumerate(CRITERIA, start=1):
        if only and k not in only:
            continue
        results.append(fn(out_dir))
    return results

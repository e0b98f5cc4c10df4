"""Config-driven experiment runner: seeded CSV traces and mean/std summaries.

Config files are TOML. Top-level keys::

    name = "cycle500"           # used in output file names
    kind = "quadratic"           # quadratic | finite_sum | adversarial | theorem_check
    budget = 1000                # iterations (quadratic) or epochs
    seeds = [1, 2, 3, 4, 5]
    output = "runs/cycle500"    # directory, relative to the working directory
    workers = 1
    record_timing = false        # wall_ms column is 0 unless true

    [problem]                    # keys depend on kind, see PROBLEM_KEYS
    [attack]                     # adversarial only, see ATTACK_KEYS

    [[optimizer]]                # one table per compared method
    name = "frgd"                # gd | momentum | nesterov | nag | frgd | frsgd | adam | ncg
    label = "frgd"               # optional, defaults to name
    alpha = 0.25                 # constant rate, or a [optimizer.schedule] table
    beta = 0.9                   # momentum / nesterov only

Unknown keys anywhere raise :class:`ConfigError` naming the key.

Outputs per run: ``<label>__seed<k>.csv`` traces (one per optimizer and
seed) and ``summary.csv``. Every float is written with 17 significant digits,
so a fixed (config, seed) reproduces byte-identical files.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import adversarial as adv
from .linalg import symmetric_eigenvalues
from .objectives import (
    MlpModel,
    MlpObjective,
    QuadraticProblem,
    build_cycle_laplacian,
    cycle500_problem,
    gaussian_blobs,
    make_rng,
    random_spd_problem,
    two_moons,
)
from .optimizers import (
    FRSGD_240_EPOCH_SCHEDULE,
    SGD_200_EPOCH_SCHEDULE,
    FrState,
    StepDecaySchedule,
    make_optimizer,
    ncg_fr_step,
)
from .theory import run_frgd, theorem1_alpha_bound, theorem1_check, theorem2_bound

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "OptimizerSpec",
    "IterationRecord",
    "SummaryRow",
    "Improvement",
    "RunResult",
    "load_config",
    "parse_config",
    "run_experiment",
    "run_cell",
    "write_trace",
    "read_trace",
    "compare_table",
    "summarize",
    "write_summary",
    "emit_plot_data",
    "write_plot_data",
]

KINDS = ("quadratic", "finite_sum", "adversarial", "theorem_check")
TOP_KEYS = {"name", "kind", "budget", "seeds", "output", "workers", "record_timing",
            "problem", "attack", "optimizer"}
OPT_KEYS = {"name", "label", "alpha", "beta", "schedule", "restart_every", "line_search"}
SCHEDULE_KEYS = {"preset", "initial_rate", "milestones", "decay_factor", "rescale_from"}
PROBLEM_KEYS = {
    "quadratic": {"preset", "dim", "kappa", "spectrum", "problem_seed", "init"},
    "finite_sum": {"dataset", "n_samples", "noise", "data_seed", "n_features", "n_classes",
                   "widths", "activation", "batch_size", "unit_box"},
    "theorem_check": {"theorem", "dim", "dim_min", "kappa_min", "kappa_max", "spectrum",
                      "steps", "K", "alpha_rule"},
}
PROBLEM_KEYS["adversarial"] = PROBLEM_KEYS["finite_sum"]
ATTACK_KEYS = {"epsilon", "train_step", "train_iterations", "eval_step", "eval_iterations",
               "clip_low", "clip_high", "eval_fgsm"}
SCHEDULE_PRESETS = {"frsgd_240": (FRSGD_240_EPOCH_SCHEDULE, 240), "sgd_200": (SGD_200_EPOCH_SCHEDULE, 200)}
DEFAULT_SEEDS = (1, 2, 3, 4, 5)


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, msg, key=None):
        super().__init__(msg if key is None else f"{key}: {msg}")
        self.key = key


def _g(x) -> str:
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class OptimizerSpec:
    name: str
    label: str
    alpha: float | None = None
    beta: float | None = None
    schedule: StepDecaySchedule | None = None
    restart_every: int | None = None
    line_search: str = "auto"

    def rate(self, epoch: int) -> float:
        return self.schedule.rate(epoch) if self.schedule else self.alpha

    def build(self):
        kw = {"restart_every": self.restart_every} if self.restart_every else {}
        return make_optimizer(self.name, beta=self.beta, **kw)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kind: str
    budget: int
    optimizers: tuple
    seeds: tuple = DEFAULT_SEEDS
    output: str = "runs"
    workers: int = 1
    record_timing: bool = False
    problem: dict = field(default_factory=dict)
    attack: dict = field(default_factory=dict)


def _unknown(d: dict, allowed: set, where: str):
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", f"{where}{key}")


def _schedule(raw, where) -> StepDecaySchedule:
    if not isinstance(raw, dict):
        raise ConfigError("must be a table", where)
    _unknown(raw, SCHEDULE_KEYS, where + ".")
    try:
        if "preset" in raw:
            if raw["preset"] not in SCHEDULE_PRESETS:
                raise ConfigError(f"unknown schedule preset {raw['preset']!r}", where + ".preset")
            base, budget = SCHEDULE_PRESETS[raw["preset"]]
            extra = set(raw) - {"preset", "rescale_from"}
            if extra:
                raise ConfigError("presets take only rescale_from", f"{where}.{sorted(extra)[0]}")
            return base, budget
        sched = StepDecaySchedule(float(raw["initial_rate"]), tuple(raw.get("milestones", ())),
                                  float(raw.get("decay_factor", 0.1)))
        return sched, raw.get("rescale_from")
    except KeyError as exc:
        raise ConfigError("missing required key", f"{where}.{exc.args[0]}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), where) from None


def _optimizer(raw, i, kind, budget) -> OptimizerSpec:
    where = f"optimizer[{i}]"
    if not isinstance(raw, dict):
        raise ConfigError("must be a table", where)
    _unknown(raw, OPT_KEYS, where + ".")
    name = raw.get("name")
    if name is None:
        raise ConfigError("missing optimizer name", where + ".name")
    if name == "ncg" and kind != "quadratic":
        raise ConfigError("ncg is only available for quadratic experiments", where + ".name")
    if name != "ncg":
        try:
            make_optimizer(name, beta=raw.get("beta"))
        except ValueError as exc:
            raise ConfigError(str(exc), where + ".name") from None
    sched = None
    if "schedule" in raw:
        sched, from_budget = _schedule(raw["schedule"], where + ".schedule")
        rescale = raw["schedule"].get("rescale_from", from_budget if "preset" in raw["schedule"] else None)
        if rescale:
            sched = sched.rescaled(int(rescale), budget)
    alpha = raw.get("alpha")
    if name != "ncg" and (alpha is None) == (sched is None):
        raise ConfigError("give exactly one of alpha or schedule", where)
    if alpha is not None and not float(alpha) > 0:
        raise ConfigError("alpha must be positive", where + ".alpha")
    return OptimizerSpec(
        name, str(raw.get("label", name)), None if alpha is None else float(alpha),
        None if raw.get("beta") is None else float(raw["beta"]), sched,
        raw.get("restart_every"), raw.get("line_search", "auto"),
    )


def parse_config(raw: dict, base_dir=None) -> ExperimentConfig:
    _unknown(raw, TOP_KEYS, "")
    for key in ("name", "kind", "budget"):
        if key not in raw:
            raise ConfigError("missing required key", key)
    kind = raw["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r} (choose from {', '.join(KINDS)})", "kind")
    budget = raw["budget"]
    if not isinstance(budget, int) or budget < 1:
        raise ConfigError("budget must be an integer >= 1", "budget")
    seeds = tuple(raw.get("seeds", DEFAULT_SEEDS))
    if not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seed list must be a nonempty list of non-negative integers", "seeds")
    problem = dict(raw.get("problem", {}))
    _unknown(problem, PROBLEM_KEYS[kind], "problem.")
    attack = dict(raw.get("attack", {}))
    if attack and kind != "adversarial":
        raise ConfigError("attack section is only valid for adversarial experiments", "attack")
    _unknown(attack, ATTACK_KEYS, "attack.")
    opts = raw.get("optimizer", [])
    if kind != "theorem_check" and not opts:
        raise ConfigError("at least one [[optimizer]] table is required", "optimizer")
    specs = tuple(_optimizer(o, i, kind, budget) for i, o in enumerate(opts))
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate optimizer labels {labels}", "optimizer")
    output = str(raw.get("output", "runs"))
    if base_dir is not None and not Path(output).is_absolute():
        output = str(Path(base_dir) / output)
    cfg = ExperimentConfig(raw["name"], kind, budget, specs, seeds, output,
                           int(raw.get("workers", 1)), bool(raw.get("record_timing", False)),
                           problem, attack)
    _build_problem(cfg)  # fail early on bad presets
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(raw)


# --------------------------------------------------------------------------
# Problems


def _build_problem(cfg: ExperimentConfig):
    p = cfg.problem
    if cfg.kind == "quadratic":
        preset = p.get("preset", "cycle500")
        if preset == "cycle500":
            return cycle500_problem()
        if preset == "cycle":
            d = int(p.get("dim", 500))
            b = np.zeros(d)
            b[0] = 1.0
            return QuadraticProblem(build_cycle_laplacian(d), b)
        if preset == "random_spd":
            return random_spd_problem(int(p.get("dim", 20)), float(p.get("kappa", 100.0)),
                                      make_rng(int(p.get("problem_seed", 0))),
                                      spectrum=p.get("spectrum", "uniform"))
        raise ConfigError(f"unknown quadratic preset {preset!r}", "problem.preset")
    if cfg.kind in ("finite_sum", "adversarial"):
        dataset = p.get("dataset", "two_moons")
        seed = int(p.get("data_seed", 0))
        if dataset == "two_moons":
            data = two_moons(int(p.get("n_samples", 200)), float(p.get("noise", 0.1)), seed,
                             bool(p.get("unit_box", False)))
            widths = (2, 16, 16, 2)
        elif dataset == "blobs":
            data = gaussian_blobs(int(p.get("n_samples", 500)), int(p.get("n_features", 64)),
                                  int(p.get("n_classes", 10)), seed=seed)
            widths = (data.n_features, 32, data.n_classes)
        else:
            raise ConfigError(f"unknown dataset {dataset!r}", "problem.dataset")
        model = MlpModel(tuple(p.get("widths", widths)), p.get("activation", "tanh"))
        try:
            return MlpObjective(model, data)
        except ValueError as exc:
            raise ConfigError(str(exc), "problem.widths") from None
    return None


# --------------------------------------------------------------------------
# Traces


@dataclass(frozen=True)
class IterationRecord:
    n: int
    f_value: float
    grad_norm: float
    beta_n: float = 0.0
    alpha_n: float = 0.0
    wall_ms: float = 0.0
    accuracy: float = float("nan")
    status: str = "ok"


TRACE_COLUMNS = ("n", "f_value", "grad_norm", "beta_n", "alpha_n", "wall_ms", "accuracy", "status")


def write_trace(records, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TRACE_COLUMNS)
        for r in records:
            out.writerow([r.n, _g(r.f_value), _g(r.grad_norm), _g(r.beta_n), _g(r.alpha_n),
                          _g(r.wall_ms), _g(r.accuracy), r.status])


def read_trace(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"{path}: not a trace file (columns {reader.fieldnames})")
        return [
            IterationRecord(int(row["n"]), float(row["f_value"]), float(row["grad_norm"]),
                            float(row["beta_n"]), float(row["alpha_n"]), float(row["wall_ms"]),
                            float(row["accuracy"]), row["status"])
            for row in reader
        ]


@dataclass
class CellResult:
    label: str
    seed: int
    records: list
    metrics: dict
    diverged: bool
    extra_files: dict = field(default_factory=dict)


def _finite(*xs) -> bool:
    return all(math.isfinite(x) for x in xs)


def _run_quadratic(cfg, spec, seed, q):
    init = cfg.problem.get("init", "zeros")
    w = np.zeros(q.dim) if init == "zeros" else make_rng(seed).standard_normal(q.dim)
    t0 = time.perf_counter()
    clock = (lambda: 1e3 * (time.perf_counter() - t0)) if cfg.record_timing else (lambda: 0.0)
    r = q.gradient(w)
    records = [IterationRecord(0, q.value(w), float(np.linalg.norm(r)), 0.0, 0.0, clock())]
    if spec.name == "ncg":
        state = FrState.zeros(q.dim)
    else:
        opt = spec.build()
        state = opt.init(q.dim)
    diverged = False
    for n in range(1, cfg.budget + 1):
        beta, alpha = 0.0, spec.alpha or 0.0
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                if spec.name == "ncg":
                    g2 = float(r @ r)
                    beta = 0.0 if state.step_count == 0 or state.prev_grad_sq == 0 else g2 / state.prev_grad_sq
                    w, state, ls = ncg_fr_step(w, q, state, spec.line_search)
                    alpha = ls.alpha
                    if state.converged:
                        break
                else:
                    alpha = spec.rate(n - 1)
                    w, state, beta = opt.step(w, q.gradient, state, alpha)
                f = q.value(w)
                r = q.gradient(w)
                gn = float(np.linalg.norm(r))
        except FloatingPointError:
            f = gn = float("nan")
        if not _finite(f, gn):
            records.append(IterationRecord(n, f, gn, beta, alpha, clock(), status="diverged"))
            diverged = True
            break
        records.append(IterationRecord(n, f, gn, beta, alpha, clock()))
        if getattr(state, "converged", False):
            break
    last = records[-1]
    return records, {"final_f": last.f_value, "final_grad_norm": last.grad_norm}, diverged


def _attack_configs(cfg):
    a = cfg.attack
    lo, hi = float(a.get("clip_low", -2.0)), float(a.get("clip_high", 3.0))
    eps = float(a.get("epsilon", 0.1))
    train = adv.AttackConfig(eps, float(a.get("train_step", eps / 4)),
                             int(a.get("train_iterations", 10)), lo, hi)
    evals = [("natural", "none", None)]
    if a.get("eval_fgsm", True):
        evals.append(("fgsm", "fgsm", adv.AttackConfig(eps, eps, 1, lo, hi)))
    for m in a.get("eval_iterations", [10, 20, 40]):
        evals.append((f"ifgsm{m}", "ifgsm", adv.AttackConfig(eps, float(a.get("eval_step", eps / 8)), int(m), lo, hi)))
    return train, evals


def _run_finite_sum(cfg, spec, seed, obj: MlpObjective):
    model, data = obj.model, obj.data
    batch_size = int(cfg.problem.get("batch_size", 20))
    adversarial = cfg.kind == "adversarial"
    train_cfg, evals = _attack_configs(cfg) if adversarial else (None, [])
    rng = make_rng(seed)
    w = model.init_params(rng)
    opt = spec.build()
    state = opt.init(model.n_params)
    schedule = spec.schedule or StepDecaySchedule(spec.alpha)
    t0 = time.perf_counter()
    clock = (lambda: 1e3 * (time.perf_counter() - t0)) if cfg.record_timing else (lambda: 0.0)
    records = [IterationRecord(0, obj.value(w), float(np.linalg.norm(obj.gradient(w))), 0.0, 0.0,
                               clock(), obj.accuracy(w))]
    diverged = False
    for epoch in range(cfg.budget):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                w, state, stats = adv.adversarial_training_epoch(
                    model, w, data, train_cfg, opt, state, schedule, epoch, rng, batch_size)
        except FloatingPointError:
            w = np.full_like(w, np.nan)
            stats = {"beta": 0.0, "lr": schedule.rate(epoch)}
        with np.errstate(all="ignore"):
            f = obj.value(w) if np.all(np.isfinite(w)) else float("nan")
            gn = float(np.linalg.norm(obj.gradient(w))) if math.isfinite(f) else float("nan")
        if not _finite(f, gn):
            records.append(IterationRecord(epoch + 1, f, gn, stats["beta"], stats["lr"], clock(),
                                           status="diverged"))
            diverged = True
            break
        records.append(IterationRecord(epoch + 1, f, gn, stats["beta"], stats["lr"], clock(),
                                       obj.accuracy(w)))
    last = records[-1]
    metrics = {"final_loss": last.f_value, "final_grad_norm": last.grad_norm,
               "final_accuracy": last.accuracy}
    if adversarial:
        for name, kind, acfg in evals:
            metrics[f"{name}_acc"] = (
                float("nan") if diverged else adv.robust_accuracy(model, w, data, kind, acfg)
            )
    return records, metrics, diverged


def _theorem_instance(cfg, seed):
    p = cfg.problem
    rng = make_rng(seed)
    d_max = int(p.get("dim", 30))
    d = int(rng.integers(int(p.get("dim_min", d_max)), d_max + 1))
    kappa = float(10 ** rng.uniform(np.log10(float(p.get("kappa_min", 10.0))),
                                    np.log10(float(p.get("kappa_max", 1000.0)))))
    q = random_spd_problem(d, kappa, rng, spectrum=p.get("spectrum", "uniform"))
    w0 = rng.standard_normal(d)
    return q, w0


def _run_theorem(cfg, seed, theorem, out_dir):
    p = cfg.problem
    q, w0 = _theorem_instance(cfg, seed)
    lam = symmetric_eigenvalues(q.A)
    if theorem == 1:
        K = int(p.get("K", 30))
        alpha = theorem1_alpha_bound(lam[0], lam[-1], 0.0, q.dim, float(np.linalg.norm(q.gradient(w0))), K)
        rep = theorem1_check(run_frgd(q, w0, alpha, K), q, K)
        metrics = {"violations": float(rep.violations), "max_ratio_minus_ceiling":
                   float(np.max(rep.ratios) - rep.rate_ceiling)}
    else:
        steps = int(p.get("steps", 20))
        rule = p.get("alpha_rule", "inverse_lmax")
        if rule != "inverse_lmax":
            raise ConfigError(f"unknown alpha_rule {rule!r}", "problem.alpha_rule")
        rep = theorem2_bound(run_frgd(q, w0, 1.0 / lam[-1], steps), q.A)
        metrics = {"violations": float(rep.violations),
                   "evaluated_rows": float(sum(not r.degenerate for r in rep.rows))}
    path = Path(out_dir) / f"theorem{theorem}__seed{seed}.csv"
    rep.to_csv(path)
    return CellResult(f"theorem{theorem}", seed, [], metrics, False, {"report": str(path)})


def run_cell(cfg: ExperimentConfig, spec: OptimizerSpec, seed: int) -> CellResult:
    """Run one (optimizer, seed) cell; pure apart from the returned records."""
    problem = _build_problem(cfg)
    if cfg.kind == "quadratic":
        records, metrics, diverged = _run_quadratic(cfg, spec, seed, problem)
    else:
        records, metrics, diverged = _run_finite_sum(cfg, spec, seed, problem)
    return CellResult(spec.label, seed, records, metrics, diverged)


def _cell_job(args):
    return run_cell(*args)


def _theorem_job(args):
    return _run_theorem(*args)


# --------------------------------------------------------------------------
# Summaries


@dataclass(frozen=True)
class SummaryRow:
    optimizer: str
    metric: str
    mean: float
    std: float
    seed_count: int
    diverged: int = 0


@dataclass(frozen=True)
class Improvement:
    metric: str
    group_a: str
    group_b: str
    value: float  # mean_a - mean_b


def _mean_std(values):
    v = np.asarray(values, dtype=float)
    mean = float(np.mean(v))
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return mean, std


def summarize(groups: dict) -> list:
    """Mean and sample std (ddof=1; 0 for one seed) per group and metric.

    ``groups`` maps a label to a list of per-seed metric dicts.
    """
    rows = []
    for label, runs in groups.items():
        if not runs:
            raise ValueError(f"group {label!r} is empty")
        for metric in runs[0]:
            vals = [r[metric] for r in runs]
            mean, std = _mean_std(vals)
            n_bad = sum(1 for x in vals if not math.isfinite(x))
            rows.append(SummaryRow(label, metric, mean, std, len(vals), n_bad))
    return rows


def compare_table(groups: dict):
    """Summary rows plus pairwise ``mean_a - mean_b`` for every ordered pair.

    Pairs follow the input order (a listed before b). All groups must report
    the same metrics.
    """
    if len(groups) < 2:
        raise ValueError("need at least two groups to compare")
    metric_sets = {label: tuple(runs[0]) if runs else () for label, runs in groups.items()}
    first = next(iter(metric_sets.values()))
    for label, ms in metric_sets.items():
        if set(ms) != set(first) or any(set(r) != set(first) for r in groups[label]):
            raise ValueError(f"group {label!r} reports metrics {ms}, expected {first}")
    rows = summarize(groups)
    means = {(r.optimizer, r.metric): r.mean for r in rows}
    labels = list(groups)
    improvements = [
        Improvement(m, a, b, means[(a, m)] - means[(b, m)])
        for m in first
        for i, a in enumerate(labels)
        for b in labels[i + 1 :]
    ]
    return rows, improvements


def write_summary(rows, path, improvements=()) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["optimizer", "metric", "mean", "std", "seeds", "diverged"])
        for r in rows:
            out.writerow([r.optimizer, r.metric, _g(r.mean), _g(r.std), r.seed_count, r.diverged])
        if improvements:
            out.writerow([])
            out.writerow(["metric", "group_a", "group_b", "a_minus_b"])
            for imp in improvements:
                out.writerow([imp.metric, imp.group_a, imp.group_b, _g(imp.value)])


def emit_plot_data(records, series: str = "trace", y: str = "f_value", log: bool = False):
    """Long-format ``(series, x, y)`` rows; ``log`` applies log10 (NaN for y <= 0)."""
    if y not in ("f_value", "grad_norm", "accuracy"):
        raise ValueError(f"unknown y column {y!r}")
    rows = []
    for r in records:
        v = getattr(r, y)
        if log:
            v = math.log10(v) if v > 0 else float("nan")
        rows.append((series, r.n, v))
    return rows


def write_plot_data(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["series", "x", "y"])
        for s, x, v in rows:
            out.writerow([s, x, _g(v)])


# --------------------------------------------------------------------------
# Runner


@dataclass
class RunResult:
    out_dir: Path
    trace_files: list
    summary_file: Path
    summary: list
    improvements: list
    cells: list
    diverged: bool


def run_experiment(cfg: ExperimentConfig, out_dir=None, seeds=None, workers=None,
                   theorem: int | None = None) -> RunResult:
    """Run every (optimizer, seed) cell, write traces and ``summary.csv``.

    Cells are independent; with ``workers > 1`` they fan out to a process
    pool and results are merged in config order, then seed order.
    """
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    seeds = tuple(seeds) if seeds is not None else cfg.seeds
    workers = workers if workers is not None else cfg.workers
    if cfg.kind == "theorem_check":
        which = theorem or int(cfg.problem.get("theorem", 2))
        if which not in (1, 2):
            raise ConfigError("theorem must be 1 or 2", "problem.theorem")
        jobs = [(cfg, s, which, out) for s in seeds]
        fn = _theorem_job
    else:
        jobs = [(cfg, spec, s) for spec in cfg.optimizers for s in seeds]
        fn = _cell_job
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(fn, jobs))
    else:
        cells = [fn(j) for j in jobs]
    traces = []
    for c in cells:
        if c.records:
            path = out / f"{c.label}__seed{c.seed}.csv"
            write_trace(c.records, path)
            traces.append(path)
        else:
            traces.append(Path(c.extra_files["report"]))
    groups = {}
    for c in cells:
        groups.setdefault(c.label, []).append(c.metrics)
    if len(groups) >= 2:
        rows, imps = compare_table(groups)
    else:
        rows, imps = summarize(groups), []
    summary_path = out / "summary.csv"
    write_summary(rows, summary_path, imps)
    return RunResult(out, traces, summary_path, rows, imps, cells, any(c.diverged for c in cells))

"""Command line entry point.

Verbs::

    frmomentum run CONFIG [--out DIR] [--seeds 1,2,3] [--workers N]
    frmomentum compare TRACE... [--out FILE]
    frmomentum plotdata TRACE... [--y f_value|grad_norm|accuracy] [--log-transform] [--out FILE]
    frmomentum theorem1 CONFIG [--out DIR] [--seeds ...]
    frmomentum theorem2 CONFIG [--out DIR] [--seeds ...]
    frmomentum verify [--out DIR]

``--config PATH`` may replace the positional CONFIG. Exit codes: 0 success,
1 configuration error, 2 numerical divergence (or a failed non-theorem
acceptance check), 3 theorem-bound violation.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

from . import harness

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_THEOREM = 0, 1, 2, 3
_TRACE_NAME = re.compile(r"^(?P<label>.+)__seed(?P<seed>\d+)\.csv$")


def _seeds(text: str):
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("seed list is empty")
    return seeds


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frmomentum", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    def config_verb(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config_path", nargs="?", metavar="CONFIG")
        p.add_argument("--config", dest="config_flag", metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--seeds", type=_seeds, metavar="a,b,c")
        p.add_argument("--workers", type=int, metavar="N")
        return p

    config_verb("run", "run an experiment config")
    config_verb("theorem1", "check the descent/contraction guarantee on a theorem_check config")
    config_verb("theorem2", "check the residual bound on a theorem_check config")

    p = sub.add_parser("compare", help="mean/std table and pairwise differences from trace files")
    p.add_argument("traces", nargs="+", metavar="TRACE")
    p.add_argument("--out", metavar="FILE")

    p = sub.add_parser("plotdata", help="long-format series,x,y CSV from trace files")
    p.add_argument("traces", nargs="+", metavar="TRACE")
    p.add_argument("--y", default="f_value", choices=("f_value", "grad_norm", "accuracy"))
    p.add_argument("--log-transform", action="store_true")
    p.add_argument("--out", metavar="FILE")

    p = sub.add_parser("verify", help="run the built-in acceptance suite")
    p.add_argument("--out", metavar="DIR", help="keep the acceptance CSVs here")
    p.add_argument("--only", type=_seeds, metavar="1,2,...", help="run a subset of criteria")
    return ap


def _config(args):
    path = args.config_flag or args.config_path
    if path is None:
        raise harness.ConfigError("no config given (positional CONFIG or --config PATH)")
    return harness.load_config(path)


def _run(args, theorem=None) -> int:
    cfg = _config(args)
    if theorem is not None and cfg.kind != "theorem_check":
        raise harness.ConfigError(f"theorem{theorem} needs kind = \"theorem_check\", got {cfg.kind!r}", "kind")
    res = harness.run_experiment(cfg, out_dir=args.out, seeds=args.seeds, workers=args.workers,
                                 theorem=theorem)
    for path in res.trace_files:
        print(path)
    print(res.summary_file)
    for row in res.summary:
        print(f"{row.optimizer:>12s}  {row.metric:<24s} {row.mean:.6g} +- {row.std:.3g}  (n={row.seed_count})")
    if cfg.kind == "theorem_check":
        bad = [c for c in res.cells if c.metrics["violations"] > 0]
        for c in bad:
            print(f"violation: seed {c.seed}, {int(c.metrics['violations'])} row(s)", file=sys.stderr)
        return EXIT_THEOREM if bad else EXIT_OK
    if res.diverged:
        for c in res.cells:
            if c.diverged:
                print(f"diverged: {c.label} seed {c.seed} at n={c.records[-1].n}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _final_metrics(records) -> dict:
    last = records[-1]
    return {"final_f": last.f_value, "final_grad_norm": last.grad_norm, "final_accuracy": last.accuracy}


def _compare(args) -> int:
    groups = {}
    for path in args.traces:
        m = _TRACE_NAME.match(Path(path).name)
        label = m.group("label") if m else Path(path).stem
        groups.setdefault(label, []).append(_final_metrics(harness.read_trace(path)))
    if all(all(x != x for x in (r["final_accuracy"] for r in runs)) for runs in groups.values()):
        for runs in groups.values():
            for r in runs:
                del r["final_accuracy"]
    rows, imps = harness.compare_table(groups)
    out = args.out or "/dev/stdout"
    harness.write_summary(rows, out, imps)
    return EXIT_OK


def _plotdata(args) -> int:
    rows = []
    for path in args.traces:
        m = _TRACE_NAME.match(Path(path).name)
        series = Path(path).stem if m is None else f"{m.group('label')}__seed{m.group('seed')}"
        rows += harness.emit_plot_data(harness.read_trace(path), series, args.y, args.log_transform)
    harness.write_plot_data(rows, args.out or "/dev/stdout")
    return EXIT_OK


def _verify(args) -> int:
    from .acceptance import run_all

    results = run_all(out_dir=args.out, only=args.only)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if any(r.theorem for r in failed):
        return EXIT_THEOREM
    return EXIT_DIVERGED if failed else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.verb == "run":
            return _run(args)
        if args.verb in ("theorem1", "theorem2"):
            return _run(args, theorem=int(args.verb[-1]))
        if args.verb == "compare":
            return _compare(args)
        if args.verb == "plotdata":
            return _plotdata(args)
        return _verify(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands map one-to-one onto the experiment runners plus two utilities:

    scaling | tradeoff | overthink | select   seeded CSV experiments
    train                                     gradient-descent training trace
    verify                                    property suites (exit 1 on failure)
    moments                                   fourth-moment closed-form vs MC

Config files are JSON objects whose keys mirror the flags; explicit flags win
over the file.  Exit codes: 0 ok, 1 suite failure, 2 config/usage error.
CSV artifacts go to --out (a directory, or "-" to stream the record CSV to
stdout); progress and summaries go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .experiments import (
    ExperimentConfig,
    run_metadata,
    run_overthink,
    run_scaling,
    run_select,
    run_tradeoff,
    run_verify,
    write_records,
    write_selection_csv,
    write_tradeoff_table,
)
from .selection import simplex_project
from .tasks import (
    DomainError,
    TaskMixture,
    fourth_moment_closed,
    fourth_moment_closed_mixture,
    fourth_moment_mc,
    haar_orthogonal,
    make_covariance,
)
from .rng import stream
from .training import TrainConfig, train_empirical, train_population


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--out", default=".", help="output directory, or - for stdout")
    p.add_argument("--d", type=int)
    p.add_argument("--n", help="comma-separated prompt lengths (n_list)")
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cotlab")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("scaling", "tradeoff", "overthink"):
        _add_common(sub.add_parser(name, help=f"run the {name} experiment"))

    p_select = sub.add_parser("select", help="run the task-selection experiment")
    _add_common(p_select)
    p_select.add_argument("--tasks-per-type", dest="tasks_per_type", type=int)
    p_select.add_argument("--select-n", dest="select_n", type=int)
    p_select.add_argument("--select-k", dest="select_k", type=int)

    p_train = sub.add_parser("train", help="train the attention layer, export the trace")
    p_train.add_argument("--mode", choices=("population", "empirical"), default="population")
    p_train.add_argument("--d", type=int, default=10)
    p_train.add_argument("--n", type=int, default=20)
    p_train.add_argument("--c", type=float, default=1.0)
    p_train.add_argument("--eta", default="auto")
    p_train.add_argument("--iters", type=int)
    p_train.add_argument("--tol", type=float, default=1e-10)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", default="-")

    p_verify = sub.add_parser("verify", help="run the property suites")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--trials", type=int, default=100)
    p_verify.add_argument("--bug", action="store_true",
                          help="negative control: flip the preconditioner's sign")

    p_moments = sub.add_parser("moments", help="fourth-moment closed form vs Monte Carlo")
    p_moments.add_argument("--seed", type=int, default=0)
    p_moments.add_argument("--trials", type=int, default=20_000)

    return parser


def _experiment_config(args: argparse.Namespace, experiment: str) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DomainError(f"config file not found: {path}")
        base = json.loads(path.read_text())
        base.pop("experiment", None)
    overrides: dict = {}
    for key in ("seed", "trials", "d", "k_max", "m", "tasks_per_type", "select_n", "select_k"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "n", None):
        overrides["n_list"] = [int(tok) for tok in str(args.n).split(",") if tok]
    base.update(overrides)
    base["experiment"] = experiment
    return ExperimentConfig.from_dict(base)


def _emit(records, extras: dict, cfg: ExperimentConfig, args) -> None:
    if args.out == "-":
        write_records(records, sys.stdout)
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{cfg.experiment}.csv"
    with open(csv_path, "w") as fh:
        write_records(records, fh)
    meta = run_metadata(cfg)
    meta.update({k: v for k, v in extras.items() if k == "summary"})
    (out / f"{cfg.experiment}_meta.json").write_text(json.dumps(meta, indent=2, default=str) + "\n")
    if "table" in extras:
        with open(out / "tradeoff_table.csv", "w") as fh:
            write_tradeoff_table(extras["table"], fh)
    if "per_task" in extras:
        with open(out / "selection.csv", "w") as fh:
            write_selection_csv(extras["per_task"], fh)
    print(f"wrote {len(records)} records to {csv_path}", file=sys.stderr)


def _cmd_experiment(args: argparse.Namespace, experiment: str) -> int:
    cfg = _experiment_config(args, experiment)
    t0 = time.perf_counter()
    extras: dict = {}
    if experiment == "scaling":
        records = run_scaling(cfg)
    elif experiment == "tradeoff":
        records, table = run_tradeoff(cfg)
        extras["table"] = table
    elif experiment == "overthink":
        records, summary = run_overthink(cfg)
        extras["summary"] = summary
    else:
        records, _, summary = run_select(cfg)
        extras["summary"] = {k: v for k, v in summary.items() if k != "per_task"}
        extras["per_task"] = summary["per_task"]
    elapsed = time.perf_counter() - t0
    _emit(records, extras, cfg, args)
    print(f"{experiment}: {len(records)} records in {elapsed:.1f}s (seed={cfg.seed})", file=sys.stderr)
    if args.verbose and "summary" in extras:
        print(json.dumps(extras["summary"], indent=2, default=str), file=sys.stderr)
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    eta = args.eta if args.eta == "auto" else float(args.eta)
    iters = args.iters
    if args.mode == "population":
        cfg = TrainConfig(n=args.n, c=args.c, eta=eta, iters=iters or 100_000, tol=args.tol,
                          seed=args.seed)
        cov = make_covariance(np.ones(args.d), basis=np.eye(args.d))
        trace = train_population(cov, cfg)
    else:
        if eta == "auto":
            eta = 0.001
        cfg = TrainConfig(n=args.n, c=args.c, eta=eta, iters=iters or 100, tol=args.tol,
                          seed=args.seed, optimizer="adam")
        cov = make_covariance(np.ones(args.d), basis=np.eye(args.d))
        trace = train_empirical(cov, cfg)
    if args.out == "-":
        trace.to_csv(sys.stdout)
    else:
        with open(args.out, "w") as fh:
            trace.to_csv(fh)
    print(
        f"train[{args.mode}]: {trace.iterations} iterations, final loss {trace.loss[-1]!r}, "
        f"converged={trace.converged}",
        file=sys.stderr,
    )
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig(experiment="verify", seed=args.seed, trials=args.trials, bug=args.bug)
    report = run_verify(cfg)
    for line in report.lines():
        print(line)
    print(f"verify: {'ok' if report.ok else 'FAILED'}", file=sys.stderr)
    return 0 if report.ok else 1


def _cmd_moments(args: argparse.Namespace) -> int:
    ok = True
    for i in range(3):
        rng = stream(args.seed, 30, i)
        d = int(rng.integers(2, 6))
        n = int(rng.integers(1, 8))
        cov = make_covariance(rng.uniform(0.5, 2.0, size=d), basis=haar_orthogonal(d, rng))
        a = rng.standard_normal((d, d))
        est = fourth_moment_mc(cov, a, n, trials=args.trials, seed=args.seed + i)
        sig = float((np.abs(est.mean - fourth_moment_closed(cov, a, n)) / np.maximum(est.se, 1e-300)).max())
        ok &= sig <= 5.0
        print(f"[{'PASS' if sig <= 5.0 else 'FAIL'}] single-task d={d} n={n}: max {sig:.2f} SE")
    for i in range(3):
        rng = stream(args.seed, 31, i)
        d = int(rng.integers(2, 5))
        n = int(rng.integers(1, 6))
        tasks = [
            make_covariance(rng.uniform(0.5, 2.0, size=d), basis=haar_orthogonal(d, rng))
            for _ in range(2)
        ]
        pi = simplex_project(rng.uniform(0.2, 1.0, size=2))
        a = rng.standard_normal((d, d))
        est = fourth_moment_mc(TaskMixture(tuple(tasks), pi), a, n, trials=args.trials,
                               seed=args.seed + 100 + i)
        closed = fourth_moment_closed_mixture(tasks, pi, a, n)
        sig = float((np.abs(est.mean - closed) / np.maximum(est.se, 1e-300)).max())
        ok &= sig <= 5.0
        print(f"[{'PASS' if sig <= 5.0 else 'FAIL'}] mixture d={d} n={n}: max {sig:.2f} SE")
    return 0 if ok else 1


def parse_and_dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    try:
        if args.command in ("scaling", "tradeoff", "overthink", "select"):
            return _cmd_experiment(args, args.command)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_moments(args)
    except (DomainError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

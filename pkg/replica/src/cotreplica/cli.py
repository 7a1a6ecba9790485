"""Replica command line: train the nonlinear model or render figures."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import TaskSpec
from .figures import SchemaError, render_figures
from .model import ReplicaConfig
from .train import sign_check, train_replica, write_records


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cotreplica")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the replica, write record CSV")
    p_train.add_argument("--steps", type=int, default=5000)
    p_train.add_argument("--n", type=int, default=20)
    p_train.add_argument("--d", type=int, default=10)
    p_train.add_argument("--k", type=int, default=4)
    p_train.add_argument("--batch", type=int, default=64)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--reduced", action="store_true",
                         help="2-layer, 4-head, 64-dim model instead of the 12-layer default")
    p_train.add_argument("--skewed", action="store_true",
                         help="train on the 1/i-spectrum task, test on the isotropic one")
    p_train.add_argument("--out", default="replica.csv")

    p_check = sub.add_parser("signcheck", help="matched vs skewed sign checks at one seed")
    p_check.add_argument("--steps", type=int, default=2000)
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--full", action="store_true",
                         help="full-scale architecture and d=10 (hours on CPU)")
    p_check.add_argument("--out", default="replica_signcheck.csv")

    p_render = sub.add_parser("render", help="render figures from record/selection CSVs")
    p_render.add_argument("csvs", nargs="+")
    p_render.add_argument("--out-dir", default="figures")
    return parser


def main(argv: list[str] | None = None) -> None:
    args = _build_parser().parse_args(argv)
    if args.command == "train":
        config = ReplicaConfig(train_steps=args.steps, n=args.n, d=args.d, k=args.k,
                               batch=args.batch, seed=args.seed, reduced=args.reduced)
        if args.skewed:
            result = train_replica(config, train_task=TaskSpec.skewed(args.d, 99),
                                   test_task=TaskSpec.isotropic(args.d),
                                   run_id=f"skewed-s{args.seed}", log=sys.stderr)
        else:
            result = train_replica(config, run_id=f"matched-s{args.seed}", log=sys.stderr)
        with open(args.out, "w") as fh:
            write_records(result.records, fh)
        print(f"wrote {len(result.records)} records to {args.out}", file=sys.stderr)
    elif args.command == "signcheck":
        outcome = sign_check(steps=args.steps, seed=args.seed, full=args.full)
        with open(args.out, "w") as fh:
            write_records(outcome["records"], fh)
        print(f"matched errors: {outcome['matched_errors']}", file=sys.stderr)
        print(f"skewed errors:  {outcome['skewed_errors']}", file=sys.stderr)
        ok = outcome["matched_decreases"] and outcome["skewed_increases"]
        print(f"sign checks: {'ok' if ok else 'FAILED'}", file=sys.stderr)
        sys.exit(0 if ok else 1)
    else:
        try:
            outputs = render_figures(args.csvs, args.out_dir)
        except SchemaError as exc:
            print(f"error: {exc}", file=sys.stderr)
            sys.exit(2)
        for path in outputs:
            print(path)


if __name__ == "__main__":
    main()

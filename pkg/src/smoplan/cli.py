"""Command line: single solves, permutation benchmarks, dataset generation, histograms."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (RunConfig, build_histogram, emit_histogram, emit_report,
                    parse_kernel, run_bench, solver_config)
from .datasets import format_libsvm, gen_chessboard, load_libsvm
from .planning import run_decomposition
from .problem import make_problem


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", default="pa",
                   help="smo | pa | pa-alg2 | scaled-newton | multi:<N> (default pa)")
    p.add_argument("--epsilon", type=float, default=1e-3, help="stopping gap (default 0.001)")
    p.add_argument("--eta", type=float, default=0.9, help="selection band half-width (default 0.9)")
    p.add_argument("--C", type=float, default=1.0, help="box size (default 1.0)")
    p.add_argument("--kernel", default="rbf:0.5",
                   help="rbf:<gamma> | linear | precomputed:<file> (default rbf:0.5)")
    p.add_argument("--cache-mb", type=float, default=64.0, help="Gram row cache budget in MB (default 64)")
    p.add_argument("--max-iters", type=int, default=100_000_000, help="iteration cap (default 1e8)")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("json", "csv"), default="csv", help="report format (default csv)")
    p.add_argument("--out", default=None, help="output path (default stdout)")


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text)


def _run_config(args, permutations: int = 1, seed: int = 0) -> RunConfig:
    return RunConfig(solver=args.solver, epsilon=args.epsilon, eta=args.eta, C=args.C,
                     kernel=args.kernel, cache_mb=args.cache_mb,
                     permutations=permutations, seed=seed, max_iters=args.max_iters)


def _cmd_solve(args) -> int:
    dataset = load_libsvm(args.data)
    cfg = _run_config(args)
    problem = make_problem(dataset, parse_kernel(cfg.kernel), cfg.C)
    report = run_decomposition(problem, solver_config(cfg))
    from dataclasses import replace
    report = replace(report, solver=cfg.solver, dataset=Path(args.data).name)
    _emit(emit_report([report], fmt=args.format), args.out)
    return 0


def _cmd_bench(args) -> int:
    dataset = load_libsvm(args.data)
    cfg = _run_config(args, permutations=args.permutations, seed=args.seed)
    reports, _ = run_bench(dataset, cfg, dataset_name=Path(args.data).name)
    _emit(emit_report(reports, fmt=args.format), args.out)
    return 0


def _cmd_gen_chessboard(args) -> int:
    text = format_libsvm(gen_chessboard(args.n, args.seed))
    _emit(text, args.out)
    return 0


def _cmd_hist(args) -> int:
    data = json.loads(Path(getattr(args, "in")).read_text())
    samples: list[float] = []
    for rep in data.get("reports", []):
        samples.extend(rep.get("step_ratio_samples", []))
    hist = build_histogram(np.asarray(samples, dtype=np.float64), bins=args.bins)
    _emit(emit_histogram(hist, fmt=args.format), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smoplan",
                                 description="Dual SVM training by pair decomposition, "
                                             "with planning-ahead step sizes")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="train once on a dataset file")
    p.add_argument("--data", required=True, help="dataset file (label index:value lines)")
    _add_solver_flags(p)
    _add_output_flags(p)
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("bench", help="run seeded permutation sweeps and report per-run rows")
    p.add_argument("--data", required=True, help="dataset file (label index:value lines)")
    _add_solver_flags(p)
    p.add_argument("--permutations", type=int, default=1, help="number of seeded permutations (default 1)")
    p.add_argument("--seed", type=int, default=0, help="base seed for the permutation streams (default 0)")
    _add_output_flags(p)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("gen-chessboard", help="generate a chessboard dataset file")
    p.add_argument("--n", type=int, required=True, help="number of points")
    p.add_argument("--seed", type=int, default=0, help="sampler seed (default 0)")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.set_defaults(fn=_cmd_gen_chessboard)

    p = sub.add_parser("hist", help="step-ratio histogram from a json report")
    p.add_argument("--in", required=True, help="json report produced by solve/bench --format json")
    p.add_argument("--bins", type=int, default=40, help="number of bins on the stretched axis (default 40)")
    _add_output_flags(p)
    p.set_defaults(fn=_cmd_hist)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

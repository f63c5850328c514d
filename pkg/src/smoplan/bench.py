"""Benchmark harness: permutation sweeps, delimited reports, step-ratio histograms."""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .planning import PaConfig, run_decomposition
from .problem import Dataset, KernelSpec, make_problem
from .datasets import permute
from .solver import SolveReport

CSV_COLUMNS = ("solver", "dataset", "perm", "seed", "iterations", "time_s", "f_final",
               "kkt_gap", "free_steps", "clipped_steps", "planning_steps", "converged")

_SOLVER_NAMES = ("smo", "pa", "pa-alg2", "scaled-newton")


@dataclass(frozen=True)
class RunConfig:
    """One benchmark invocation: solver choice, QP parameters, sweep controls."""

    solver: str = "pa"
    epsilon: float = 1e-3
    eta: float = 0.9
    C: float = 1.0
    kernel: str = "rbf:0.5"
    cache_mb: float = 64.0
    permutations: int = 1
    seed: int = 0
    max_iters: int = 100_000_000
    record_step_ratios: bool = True

    def __post_init__(self):
        if self.permutations < 1:
            raise ValueError("permutations must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        _split_solver(self.solver)  # validate eagerly


def _split_solver(name: str) -> tuple[str, int]:
    """CLI solver name -> (variant, n_recent)."""
    if name.startswith("multi:"):
        tail = name[len("multi:"):]
        if not (tail.isascii() and tail.isdigit()):
            raise ValueError(f"bad multi solver spec {name!r}, expected multi:<N>")
        return "multi", int(tail)
    if name in _SOLVER_NAMES:
        return name.replace("-", "_"), 1
    raise ValueError(f"unknown solver {name!r}; use one of {', '.join(_SOLVER_NAMES)} or multi:<N>")


def parse_kernel(spec: str) -> KernelSpec:
    """Kernel flag syntax: rbf:<gamma>, linear, or precomputed:<file> (.npy or text matrix)."""
    if spec == "linear":
        return KernelSpec.linear_kernel()
    if spec.startswith("rbf:"):
        try:
            gamma = float(spec[len("rbf:"):])
        except ValueError:
            raise ValueError(f"bad kernel spec {spec!r}: gamma is not a number") from None
        return KernelSpec.gaussian_kernel(gamma)
    if spec.startswith("precomputed:"):
        path = Path(spec[len("precomputed:"):])
        M = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, ndmin=2)
        return KernelSpec.precomputed_kernel(M)
    raise ValueError(f"unknown kernel spec {spec!r}; use rbf:<gamma>, linear, or precomputed:<file>")


def solver_config(cfg: RunConfig, record_trace: bool = False, instrument: bool = False) -> PaConfig:
    variant, n = _split_solver(cfg.solver)
    return PaConfig(epsilon=cfg.epsilon, max_iters=cfg.max_iters, cache_mb=cfg.cache_mb,
                    record_step_ratios=cfg.record_step_ratios, record_trace=record_trace,
                    instrument=instrument, eta=cfg.eta, variant=variant, n_recent=n)


def bench_summary(reports: Sequence[SolveReport]) -> dict:
    """Aggregate statistics over the converged runs of a sweep.

    Runs that hit the iteration cap stay in the per-run rows but are excluded
    from the means; the summary records how many were excluded.  With no
    converged runs the aggregate fields are None.
    """
    done = [r for r in reports if r.converged]
    out = {
        "runs": len(reports),
        "converged_runs": len(done),
        "excluded_not_converged": len(reports) - len(done),
        "mean_iterations": None,
        "median_iterations": None,
        "mean_time_s": None,
        "mean_f_final": None,
    }
    if done:
        out["mean_iterations"] = float(statistics.fmean(r.iterations for r in done))
        out["median_iterations"] = float(statistics.median(r.iterations for r in done))
        out["mean_time_s"] = float(statistics.fmean(r.time_s for r in done))
        out["mean_f_final"] = float(statistics.fmean(r.f_final for r in done))
    return out


def run_bench(dataset: Dataset, cfg: RunConfig,
              dataset_name: str = "dataset") -> tuple[list[SolveReport], dict]:
    """Solve the dataset under `permutations` seeded reorderings.

    Permutation k uses the PCG64 stream seeded by SeedSequence([seed, k]), so
    a sweep is reproducible from (dataset, seed) alone and permutations are
    independent of each other.  Returns the per-permutation reports plus the
    bench_summary aggregate.
    """
    kernel = parse_kernel(cfg.kernel)
    pa_cfg = solver_config(cfg)
    reports = []
    for k in range(cfg.permutations):
        ds_k = permute(dataset, np.random.SeedSequence([cfg.seed, k]))
        problem = make_problem(ds_k, kernel, cfg.C)
        rep = run_decomposition(problem, pa_cfg)
        reports.append(replace(rep, solver=cfg.solver, dataset=dataset_name,
                               permutation=k, seed=cfg.seed))
    return reports, bench_summary(reports)


def _report_row(r: SolveReport) -> list:
    return [r.solver, r.dataset, r.permutation, r.seed, r.iterations,
            repr(float(r.time_s)), repr(float(r.f_final)), repr(float(r.kkt_gap)),
            r.free_steps, r.clipped_steps, r.planning_steps,
            "true" if r.converged else "false"]


def _report_dict(r: SolveReport) -> dict:
    return {
        "solver": r.solver, "dataset": r.dataset, "perm": r.permutation, "seed": r.seed,
        "iterations": r.iterations, "time_s": float(r.time_s), "f_final": float(r.f_final),
        "kkt_gap": float(r.kkt_gap), "free_steps": r.free_steps,
        "clipped_steps": r.clipped_steps, "planning_steps": r.planning_steps,
        "converged": r.converged,
        "step_ratio_samples": [float(v) for v in r.step_ratio_samples],
    }


def emit_report(reports: Sequence[SolveReport], fmt: str = "csv",
                path: Optional[str] = None) -> str:
    """Render reports as csv (fixed column order, one row per run) or json.

    The csv holds the summary columns only; json additionally carries the
    step-ratio samples for histogram building.  Floats are written with
    shortest round-trip repr, so identical runs give identical bytes (the
    time_s column is wall time and the one expected difference).
    """
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in reports:
            w.writerow(_report_row(r))
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps({"reports": [_report_dict(r) for r in reports],
                           "summary": bench_summary(reports)}, sort_keys=True)
    else:
        raise ValueError(f"unknown format {fmt!r}; use csv or json")
    if path is not None:
        Path(path).write_text(text)
    return text


@dataclass(frozen=True)
class HistogramSpec:
    """Step-ratio histogram on the stretched axis t = sign(v) sqrt(2 log10(1+|v|)).

    v is the step-to-Newton ratio minus one, so a plain Newton step sits at
    t = 0.  t_edges are bins+1 equal-width edges on t in [-2, 2]; value_edges map them
    back through v = sign(t) (10^(t^2/2) - 1), so the value axis runs -99..99.
    counts has bins+1 entries: the last is the overflow count (t >= 2, i.e.
    ratio >= 99 including +inf); ratios below the left edge land in bin 0, so
    counts always sums to the number of samples.
    """

    bins: int
    t_edges: np.ndarray
    value_edges: np.ndarray
    counts: np.ndarray


def ratio_to_axis(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.sqrt(2.0 * np.log10(1.0 + np.abs(v)))


def axis_to_ratio(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return np.sign(t) * (10.0 ** (t * t / 2.0) - 1.0)


def build_histogram(samples, bins: int = 40) -> HistogramSpec:
    """Bin step-to-Newton ratio samples on the compressed deviation axis.

    Samples are mu/mu_star values; the axis coordinate is t with
    mu/mu_star - 1 = sign(t) * (10^(t^2/2) - 1), so a plain Newton step
    (ratio 1) lands at t = 0 in the center bin.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if np.isnan(samples).any():
        raise ValueError("ratio samples contain NaN")
    t = ratio_to_axis(samples - 1.0)
    idx = np.clip(np.floor((t + 2.0) / 4.0 * bins), 0, bins)
    counts = np.bincount(idx.astype(np.int64), minlength=bins + 1) if samples.size else np.zeros(bins + 1, dtype=np.int64)
    t_edges = np.linspace(-2.0, 2.0, bins + 1)
    return HistogramSpec(bins=bins, t_edges=t_edges, value_edges=axis_to_ratio(t_edges),
                         counts=counts)


def histogram_rows(hist: HistogramSpec) -> list[list]:
    """Table form of a histogram: one row per bin plus the overflow row."""
    rows = []
    for b in range(hist.bins):
        rows.append([b, repr(float(hist.t_edges[b])), repr(float(hist.t_edges[b + 1])),
                     repr(float(hist.value_edges[b])), repr(float(hist.value_edges[b + 1])),
                     int(hist.counts[b])])
    rows.append(["overflow", repr(2.0), "inf", repr(99.0), "inf", int(hist.counts[hist.bins])])
    return rows


def emit_histogram(hist: HistogramSpec, fmt: str = "csv", path: Optional[str] = None) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("bin", "t_lo", "t_hi", "ratio_lo", "ratio_hi", "count"))
        for row in histogram_rows(hist):
            w.writerow(row)
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps({
            "bins": hist.bins,
            "t_edges": [float(v) for v in hist.t_edges],
            "value_edges": [float(v) for v in hist.value_edges],
            "counts": [int(v) for v in hist.counts],
        }, sort_keys=True)
    else:
        raise ValueError(f"unknown format {fmt!r}; use csv or json")
    if path is not None:
        Path(path).write_text(text)
    return text

"""Release acceptance suite: one test per numbered check.

Each check is self-contained and asserts the exact tolerance it gates on, so
`pytest -v tests/test_acceptance.py` yields one pass/fail line per check.
Checks 2, 3, 4 and parts of 6 share a single benchmark sweep (chessboard,
n=1000, C=1e6, 10 permutations, both solvers) that runs once as a module
fixture; expect a few minutes of wall time for this file.
"""

import csv
import statistics
import time

import numpy as np
import pytest

from conftest import random_problem, toy2

from smoplan import (
    KernelCache,
    KernelSpec,
    PaConfig,
    PlanContext,
    SolverConfig,
    SolverState,
    apply_step,
    dense_gram,
    dense_objective,
    dense_reference_solve,
    feasibility_violation,
    gen_chessboard,
    make_problem,
    newton_step,
    pa_solve,
    permute,
    plan_ahead,
    smo_solve,
    verify_kkt,
)
from smoplan.bench import CSV_COLUMNS
from smoplan.cli import main
from smoplan.planning import recompute_gradient

SWEEP_SEED = 0
SWEEP_C = 1e6
SWEEP_EPSILON = 1e-3
SWEEP_PERMUTATIONS = 10


@pytest.fixture(scope="module")
def chessboard_sweep():
    """Instrumented benchmark runs: 10 seeded permutations x {smo, pa}."""
    dataset = gen_chessboard(1000, seed=SWEEP_SEED)
    kernel = KernelSpec.gaussian_kernel(0.5)
    out = {}
    for variant in ("smo", "pa"):
        runs = []
        for k in range(SWEEP_PERMUTATIONS):
            shuffled = permute(dataset, np.random.SeedSequence([SWEEP_SEED, k]))
            problem = make_problem(shuffled, kernel, SWEEP_C)
            cfg = PaConfig(epsilon=SWEEP_EPSILON, max_iters=100_000_000,
                           instrument=True, gradient_check_every=10_000,
                           variant=variant)
            runs.append((problem, pa_solve(problem, cfg)))
        out[variant] = runs
    return out


def test_01_solvers_match_reference_on_random_instances():
    """Both solvers at epsilon 1e-8 agree with the dense reference on 200
    seeded instances (sizes 2..8, PSD and singular kernels, C in 0.1/1/10)
    to |f - f*| <= 1e-6 max(1, |f*|), in under a minute."""
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(200):
        problem = random_problem(seed)
        ref = dense_reference_solve(problem)
        tol = 1e-6 * max(1.0, abs(ref.f_star))
        for rep in (smo_solve(problem, SolverConfig(epsilon=1e-8)),
                    pa_solve(problem, PaConfig(epsilon=1e-8))):
            err = abs(rep.f_final - ref.f_star)
            worst = max(worst, err / max(1.0, abs(ref.f_star)))
            assert err <= tol, (seed, rep.solver, rep.f_final, ref.f_star)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"reference sweep took {elapsed:.1f}s"
    print(f"[check 1] 200 instances x 2 solvers, worst rel err {worst:.3e}, {elapsed:.1f}s")


def test_02_planning_reduces_chessboard_iterations(chessboard_sweep):
    """Mean planning-solver iterations over the benchmark sweep come in below
    0.95x the plain solver's mean (every run converged under the cap)."""
    for variant in ("smo", "pa"):
        for _, rep in chessboard_sweep[variant]:
            assert rep.converged, (variant, rep.permutation)
    mean_smo = statistics.fmean(r.iterations for _, r in chessboard_sweep["smo"])
    mean_pa = statistics.fmean(r.iterations for _, r in chessboard_sweep["pa"])
    ratio = mean_pa / mean_smo
    print(f"[check 2] mean iterations pa={mean_pa:.0f} smo={mean_smo:.0f} ratio={ratio:.4f}")
    assert ratio < 0.95, f"iteration ratio {ratio:.4f} not below 0.95"


def test_03_planning_solution_quality(chessboard_sweep):
    """Mean final objective of the planning solver is no worse than the plain
    solver's mean, up to 1e-8 max(1, |f|), on the same sweep."""
    mean_smo = statistics.fmean(r.f_final for _, r in chessboard_sweep["smo"])
    mean_pa = statistics.fmean(r.f_final for _, r in chessboard_sweep["pa"])
    slack = 1e-8 * max(1.0, abs(mean_smo))
    print(f"[check 3] mean f pa={mean_pa!r} smo={mean_smo!r} margin={mean_pa - mean_smo:.3e}")
    assert mean_pa >= mean_smo - slack


def test_04_double_step_gain_floor(chessboard_sweep):
    """Every recorded double step in the sweep gains at least
    (1 - 0.9^2) g-tilde - 1e-10 max(1, |f|): zero violations, and the
    bookkeeping covers every planning step except a trailing unpaired one."""
    total_doubles = 0
    for _, rep in chessboard_sweep["pa"]:
        assert rep.planning_bound_violations == 0, rep.permutation
        assert rep.planning_bound_min_margin >= 0.0, rep.permutation
        assert rep.planning_double_steps == rep.planning_steps - rep.planning_tail_pending
        assert rep.planning_tail_pending in (0, 1)
        total_doubles += rep.planning_double_steps
    assert total_doubles > 0
    worst = min(r.planning_bound_min_margin for _, r in chessboard_sweep["pa"])
    print(f"[check 4] {total_doubles} double steps, zero floor violations, min margin {worst:.3e}")


def test_05_parabola_gain_identities():
    """On 1000 random free directions the measured gain at mu = r mu* equals
    (2r - r^2) g-tilde within 1e-10 (relative to the bound) for
    r in 0.5/1/1.1/1.5/2; stepping 1.1x the Newton step keeps 99% of the gain."""
    checked = 0
    seed = 0
    while checked < 1000:
        assert seed < 2000, "not enough eligible directions"
        problem = random_problem(seed, C=10.0)
        state = SolverState.initial(problem)
        taken = 0
        for i in range(len(problem)):
            for j in range(len(problem)):
                if i == j or taken >= 4 or checked >= 1000:
                    continue
                plan = newton_step(problem, state, (i, j))
                if plan.curvature <= 0.0 or plan.mu_star == 0.0 or not np.isfinite(plan.mu_star):
                    continue
                if not (plan.lo < 2.0 * plan.mu_star < plan.hi):
                    continue
                bound = 0.5 * plan.direction_gradient ** 2 / plan.curvature
                tol = 1e-10 * max(1.0, bound)
                for r in (0.5, 1.0, 1.1, 1.5, 2.0):
                    moved = state.alpha.copy()
                    moved[i] += r * plan.mu_star
                    moved[j] -= r * plan.mu_star
                    gain = dense_objective(problem, moved)
                    assert abs(gain - (2.0 * r - r * r) * bound) <= tol, (seed, i, j, r)
                taken += 1
                checked += 1
        seed += 1

    # the scaled-Newton solver realizes the r=1.1 point of the same parabola:
    # its first free step keeps exactly 99% of the bound gain
    problem = toy2(C=2.0)
    rep = pa_solve(problem, PaConfig(variant="scaled_newton", scale_factor=1.1,
                                     epsilon=1e-12, max_iters=1))
    assert rep.free_steps == 1
    assert abs(rep.f_final - 0.99) <= 1e-10
    print(f"[check 5] {checked} directions over {seed} instances; 1.1x Newton step kept 99%")


def test_06_invariant_suite(chessboard_sweep):
    """Feasibility after every step, bounded gradient drift, monotone plain
    steps, non-negative double steps, and independent re-certification of
    every converged run."""
    # (a) per-iteration equality-constraint drift and box feasibility at
    # benchmark scale; the recorded gradient drift stays far below the
    # gradient magnitudes the runs work with (scale C)
    for variant in ("smo", "pa"):
        for problem, rep in chessboard_sweep[variant]:
            assert rep.max_sum_violation <= 1e-9 * SWEEP_C * len(problem)
            box, total = feasibility_violation(problem, rep.alpha)
            assert box == 0.0
            assert total <= 1e-9 * SWEEP_C * len(problem)
            assert rep.max_gradient_deviation <= 1e-12 * SWEEP_C

    # (b) the same at small scale, with tight epsilon
    for seed in range(300, 330):
        problem = random_problem(seed)
        rep = pa_solve(problem, PaConfig(epsilon=1e-8, instrument=True))
        assert rep.max_sum_violation <= 1e-9 * max(1.0, problem.C * len(problem))
        box, _ = feasibility_violation(problem, rep.alpha)
        assert box == 0.0

    # (c) gradient deviation stays under 1e-8 after 1e4 update steps
    problem = make_problem(gen_chessboard(200, seed=4), KernelSpec.gaussian_kernel(0.5), 10.0)
    state = SolverState.initial(problem)
    cache = KernelCache.with_megabytes(64)
    rng = np.random.default_rng(12345)
    applied = 0
    for _ in range(2_000_000):
        if applied == 10_000:
            break
        i, j = (int(v) for v in rng.choice(len(problem), size=2, replace=False))
        plan = newton_step(problem, state, (i, j), cache)
        if plan.mu == 0.0:
            continue
        apply_step(problem, state, plan, cache)
        applied += 1
    assert applied == 10_000
    drift = float(np.max(np.abs(state.gradient - recompute_gradient(problem, state.alpha, cache))))
    assert drift <= 1e-8, f"gradient drift {drift:.3e} after 1e4 steps"

    # (d) plain steps never decrease f: replay traces against the dense objective
    def replay_monotone(problem, trace):
        K = dense_gram(problem)
        y = np.asarray(problem.y, dtype=np.float64)
        alpha = np.zeros(len(problem))
        f_prev = 0.0
        for (i, j, mu, _kind) in trace:
            alpha[i] += mu
            alpha[j] -= mu
            f = float(y @ alpha - 0.5 * (alpha @ (K @ alpha)))
            assert f >= f_prev - 1e-12 * max(1.0, abs(f))
            f_prev = f

    for seed in range(330, 342):
        problem = random_problem(seed)
        rep = smo_solve(problem, SolverConfig(epsilon=1e-8, record_trace=True))
        replay_monotone(problem, rep.trace)
    board = make_problem(gen_chessboard(60, seed=6), KernelSpec.gaussian_kernel(0.5), 10.0)
    rep = smo_solve(board, SolverConfig(epsilon=1e-6, record_trace=True))
    replay_monotone(board, rep.trace)

    # (e) double-step sums never go negative on the sweep
    for _, rep in chessboard_sweep["pa"]:
        assert rep.planning_negative_doubles == 0

    # (f) every converged run re-certified by the independent checker; the
    # benchmark-scale allowance covers incremental-gradient drift over ~1e6
    # steps at C=1e6 (the measured recomputed gaps pass at plain epsilon too)
    for variant in ("smo", "pa"):
        for problem, rep in chessboard_sweep[variant]:
            assert rep.converged
            allow = 1e-11 * SWEEP_C * np.sqrt(max(rep.iterations, 1))
            chk = verify_kkt(problem, rep.alpha, epsilon=SWEEP_EPSILON + allow)
            assert chk.ok, (variant, rep.permutation, chk.gap)
    for seed in range(342, 362):
        problem = random_problem(seed)
        for rep in (smo_solve(problem, SolverConfig(epsilon=1e-8)),
                    pa_solve(problem, PaConfig(epsilon=1e-8))):
            assert rep.converged
            assert verify_kkt(problem, rep.alpha, epsilon=1e-8).ok
    print(f"[check 6] feasibility, drift {drift:.3e} <= 1e-8 after 1e4 steps, "
          f"monotone replays, re-certified {2 * SWEEP_PERMUTATIONS} sweep + 40 small runs")


def test_07_reduction_equivalences():
    """The planner variants collapse to the plain solver exactly where they
    must: planner forced off, planning never triggered, candidate window of
    one, and a decoupled two-pair system."""
    # planner forced off: identical trace, objective, iterate
    for seed in range(10):
        problem = random_problem(seed + 400)
        a = smo_solve(problem, SolverConfig(epsilon=1e-8, record_trace=True))
        b = pa_solve(problem, PaConfig(epsilon=1e-8, record_trace=True, variant="smo"))
        assert a.trace == b.trace
        assert a.iterations == b.iterations
        assert a.f_final == b.f_final
        assert np.array_equal(a.alpha, b.alpha)

    # tiny box: every step clips, planning never fires, traces identical
    all_clipped = 0
    for seed in range(40):
        problem = random_problem(seed, C=1e-7)
        a = smo_solve(problem, SolverConfig(epsilon=1e-8, record_trace=True))
        if a.free_steps > 0:
            continue
        all_clipped += 1
        b = pa_solve(problem, PaConfig(epsilon=1e-8, record_trace=True))
        assert b.planning_steps == 0
        assert a.trace == b.trace
        assert a.f_final == b.f_final
    assert all_clipped >= 5

    # candidate window of one is the default planner
    for seed in range(8):
        problem = random_problem(seed + 450)
        a = pa_solve(problem, PaConfig(epsilon=1e-8, record_trace=True, variant="pa"))
        b = pa_solve(problem, PaConfig(epsilon=1e-8, record_trace=True,
                                       variant="multi", n_recent=1))
        assert a.trace == b.trace
        assert a.f_final == b.f_final

    # decoupled pairs: the plan is the Newton step, bit for bit
    rng = np.random.default_rng(7)
    for _ in range(300):
        q11, q22 = np.exp(rng.uniform(-3.0, 3.0, size=2))
        w1, w2 = 10.0 * rng.standard_normal(2)
        res = plan_ahead(PlanContext(q11=float(q11), q22=float(q22), q12=0.0,
                                     w1=float(w1), w2=float(w2)))
        assert not res.degenerate
        assert res.mu1 == w1 / q11
        assert res.mu2 == w2 / q22
    print("[check 7] off-switch, tiny-box, window-1 and decoupled reductions all exact "
          f"({all_clipped} all-clipped instances)")


def test_08_bench_csv_determinism(tmp_path, capsys):
    """Two bench invocations with the same seed write byte-identical csv,
    the wall-time column aside."""
    data = tmp_path / "board.txt"
    assert main(["gen-chessboard", "--n", "80", "--seed", "5", "--out", str(data)]) == 0
    outs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        code = main(["bench", "--data", str(data), "--solver", "pa", "--C", "100",
                     "--epsilon", "1e-4", "--permutations", "3", "--seed", "11",
                     "--out", str(path)])
        assert code == 0
        outs.append(path.read_text())
    capsys.readouterr()
    rows_a = list(csv.reader(outs[0].splitlines()))
    rows_b = list(csv.reader(outs[1].splitlines()))
    assert len(rows_a) == len(rows_b) == 4
    tcol = CSV_COLUMNS.index("time_s")
    diffs = 0
    for ra, rb in zip(rows_a, rows_b):
        if ra != rb:
            diffs += 1
            ra = ra[:tcol] + ra[tcol + 1:]
            rb = rb[:tcol] + rb[tcol + 1:]
        assert ra == rb
    print(f"[check 8] identical csv modulo time_s ({diffs} rows differed only there)")

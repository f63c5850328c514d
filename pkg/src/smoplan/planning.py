"""Planning-ahead step sizes and the shared solve loop for every solver variant.

A plain decomposition step maximizes the objective along one pair direction.
The planner instead treats the current pair together with a recently used
pair as a 2-D subspace: with w_t the direction derivatives and Q the 2x2
curvature matrix (Q_11, Q_22 the pair curvatures, Q_12 their coupling), the
unconstrained two-step optimum is

    mu_1 = (Q_22 w_1 - Q_12 w_2) / det Q,    mu_2 = w_2/Q_22 - (Q_12/Q_22) mu_1.

Applying mu_1 now (when both resulting points stay strictly inside the box)
overshoots or undershoots the 1-D optimum so that the *next* step can finish
the 2-D move.  Selection adapts to how the previous step size compared with
its Newton step: near the Newton step the usual gain-bound selection is kept,
far from it the second index is chosen by exact clipped gain, and in both
cases a recently used pair may replace the chosen one when its measure is
strictly larger.
"""

from __future__ import annotations

import math
import time
from array import array
from dataclasses import dataclass, replace
from itertools import islice
from typing import Optional

import numpy as np

from ._kernels import pick_second_bound, pick_second_exact, scan_extremes
from .problem import KernelCache, TrainingProblem, gram_row, objective
from .solver import (
    SolveReport,
    SolverConfig,
    SolverState,
    StepPlan,
    WorkingSet,
    _apply_core,
    _bound_gain,
    _clipped_gain,
    _gain,
    _newton_mu,
    newton_step,
)

_VARIANTS = ("smo", "pa", "pa_alg2", "scaled_newton", "multi")


@dataclass(frozen=True)
class PlanContext:
    """Scalars of the 2-D planning sub-problem (current pair first)."""

    q11: float
    q22: float
    q12: float
    w1: float
    w2: float


@dataclass(frozen=True)
class PlanResult:
    mu1: float
    mu2: float
    gain: float  # predicted double-step gain at mu1 with an optimal second step
    degenerate: bool


def double_step_gain(ctx: PlanContext, mu1: float) -> float:
    """Gain of stepping mu1 along the first pair and then optimally along the second.

    Quadratic in mu1: 0.5 w2^2/Q22 + ((Q22 w1 - Q12 w2)/Q22) mu1 - 0.5 (det Q / Q22) mu1^2.
    """
    if ctx.q22 <= 0.0:
        raise ValueError("double_step_gain needs positive curvature along the second pair")
    det = ctx.q11 * ctx.q22 - ctx.q12 * ctx.q12
    return (0.5 * ctx.w2 * ctx.w2 / ctx.q22
            + ((ctx.q22 * ctx.w1 - ctx.q12 * ctx.w2) / ctx.q22) * mu1
            - 0.5 * (det / ctx.q22) * mu1 * mu1)


def plan_ahead(ctx: PlanContext) -> PlanResult:
    """Unconstrained two-step optimum of the 2-D sub-problem.

    Degenerate when either pair curvature is nonpositive or the 2x2 system is
    (numerically) singular.  Q12 = 0 decouples the directions and mu1 reduces
    to the Newton step w1/Q11 exactly.
    """
    if ctx.q11 <= 0.0 or ctx.q22 <= 0.0:
        return PlanResult(0.0, 0.0, 0.0, True)
    if ctx.q12 == 0.0:
        mu1 = ctx.w1 / ctx.q11
        mu2 = ctx.w2 / ctx.q22
        return PlanResult(mu1, mu2, double_step_gain(ctx, mu1), False)
    det = ctx.q11 * ctx.q22 - ctx.q12 * ctx.q12
    if det <= 1e-12 * max(1.0, ctx.q11 * ctx.q22):
        return PlanResult(0.0, 0.0, 0.0, True)
    mu1 = (ctx.q22 * ctx.w1 - ctx.q12 * ctx.w2) / det
    mu2 = ctx.w2 / ctx.q22 - (ctx.q12 / ctx.q22) * mu1
    return PlanResult(mu1, mu2, double_step_gain(ctx, mu1), False)


@dataclass(frozen=True)
class PaConfig(SolverConfig):
    """Solver knobs plus the planning-specific ones.

    variant: "pa" (default planner), "pa_alg2" (plan after any plain step,
    not only free ones), "scaled_newton" (no planning, step 1.1x Newton),
    "multi" (plan over the n_recent most recent pairs), or "smo" (planner
    forced off; reduces to the plain solver).
    """

    eta: float = 0.9
    variant: str = "pa"
    scale_factor: float = 1.1
    n_recent: int = 1

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "variant", self.variant.replace("-", "_"))
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not (0.0 < self.eta < 1.0):
            raise ValueError(f"eta must be in (0, 1), got {self.eta!r}")
        if not (0.0 < self.scale_factor < 2.0):
            raise ValueError(f"scale_factor must be in (0, 2), got {self.scale_factor!r}")
        if not (1 <= self.n_recent <= 20):
            raise ValueError(f"n_recent must be in 1..20, got {self.n_recent!r}")


def scaled_newton_update(plan: StepPlan, factor: float) -> StepPlan:
    """Step factor * mu_star instead of mu_star, clipped to the same interval."""
    target = factor * plan.mu_star
    mu = min(max(target, plan.lo), plan.hi)
    return replace(plan, mu=float(mu), clipped=(mu != target))


def _prev_ratio(mu: float, mu_star: float) -> float:
    # previous step size relative to its Newton step; degenerate Newton steps
    # (0 or +-inf) count as ratio 0, which lands outside every band
    if mu_star == 0.0 or math.isinf(mu_star):
        return 0.0
    return mu / mu_star


def _select_pair(problem, state, cache, i, gmax, branch, n):
    """Second index for the given first index, plus recent-pair replacement.

    branch "a"/"b": j maximizes the gain bound; branch "c": j maximizes exact
    clipped gain.  In branches "b" and "c" a recently used pair may replace
    (i, j) when its measure (same measure as the branch) is strictly larger;
    replacement candidates must be feasible, and in branch "b" also have a
    positive direction derivative so the replacement step cannot be zero.
    Returns (i, j, stored curvature or None, row of the original i) or None
    when no candidate with positive violation exists.
    """
    G = state.gradient
    d = problem.diagonal
    alpha = state.alpha
    lower = problem.lower
    upper = problem.upper
    row_i = gram_row(cache, problem, i)
    if branch == "c":
        j, val = pick_second_exact(G, row_i, d, alpha, lower, upper,
                                   state.in_down, i, gmax, d[i])
    else:
        j, val = pick_second_bound(G, row_i, d, state.in_down, i, gmax, d[i])
    if j < 0:
        return None
    ws_i, ws_j, q_sel = i, int(j), None
    if branch != "a" and len(state.recent) >= 2:
        for (ci, cj, cq) in islice(state.recent, 1, n + 1):
            if not (state.in_up[ci] and state.in_down[cj]):
                continue
            lc = float(G[ci] - G[cj])
            if branch == "b":
                if lc <= 0.0:
                    continue
                cval = _bound_gain(lc, cq)
            else:
                clo = max(lower[ci] - alpha[ci], alpha[cj] - upper[cj])
                chi = min(upper[ci] - alpha[ci], alpha[cj] - lower[cj])
                _, cval = _clipped_gain(lc, cq, clo, chi)
            if cval > val:
                val = cval
                ws_i, ws_j, q_sel = ci, cj, cq
    return ws_i, ws_j, q_sel, row_i


def _best_plan(problem, state, ws_i, ws_j, l_ws, q_ws, row_a, row_b, n):
    """Best feasible plan over the n most recently used pairs, or None.

    Feasible means both points of the planned double step stay strictly
    inside the box on the coordinates they touch (overlap-aware when the
    second pair shares an index with the current one).
    """
    if q_ws <= 0.0:
        return None
    G = state.gradient
    alpha = state.alpha
    lower = problem.lower
    upper = problem.upper
    best_mu1 = 0.0
    best_gain = -math.inf
    found = False
    for (ci, cj, cq) in islice(state.recent, 0, n):
        if cq <= 0.0:
            continue
        q12 = float(row_a[ci] - row_a[cj] - row_b[ci] + row_b[cj])
        w2 = float(G[ci] - G[cj])
        res = plan_ahead(PlanContext(q11=q_ws, q22=cq, q12=q12, w1=l_ws, w2=w2))
        if res.degenerate:
            continue
        mu1 = res.mu1
        ai = alpha[ws_i] + mu1
        aj = alpha[ws_j] - mu1
        if not (lower[ws_i] < ai < upper[ws_i] and lower[ws_j] < aj < upper[ws_j]):
            continue
        mu2 = res.mu2
        b_ci = (ai if ci == ws_i else (aj if ci == ws_j else alpha[ci])) + mu2
        b_cj = (ai if cj == ws_i else (aj if cj == ws_j else alpha[cj])) - mu2
        if not (lower[ci] < b_ci < upper[ci] and lower[cj] < b_cj < upper[cj]):
            continue
        if res.gain > best_gain:
            best_gain = res.gain
            best_mu1 = mu1
            found = True
    return (best_mu1, best_gain) if found else None


def multi_plan(problem: TrainingProblem, state: SolverState, ws: WorkingSet,
               cache: Optional[KernelCache] = None, n_recent: int = 1):
    """Evaluate planning over the n_recent most recent pairs for the given pair.

    Returns (mu1, predicted double-step gain) of the best feasible plan, or
    None when every candidate is degenerate or infeasible.
    """
    if cache is None:
        cache = KernelCache.with_megabytes(64)
    i, j = ws
    row_a = gram_row(cache, problem, i)
    row_b = gram_row(cache, problem, j)
    d = problem.diagonal
    l_ws = float(state.gradient[i] - state.gradient[j])
    q_ws = float(d[i] - 2.0 * row_a[j] + d[j])
    return _best_plan(problem, state, i, j, l_ws, q_ws, row_a, row_b, n_recent)


def pa_update_step(problem: TrainingProblem, state: SolverState, ws: WorkingSet,
                   cache: Optional[KernelCache] = None,
                   config: Optional[PaConfig] = None) -> tuple[StepPlan, str]:
    """Resolve the step for an already-selected pair under the planning rule.

    Plans when the previous step was a free plain step (any plain step for
    pa_alg2) and the best candidate plan is feasible and nondegenerate;
    otherwise falls back to the clipped Newton step (scaled for the
    scaled_newton variant).  Returns the plan and its kind
    ("planning" / "free" / "clipped").
    """
    if cache is None:
        cache = KernelCache.with_megabytes(64)
    cfg = config or PaConfig()
    plan = newton_step(problem, state, ws, cache)
    plans = cfg.variant in ("pa", "pa_alg2", "multi")
    plan_after = ("free", "clipped") if cfg.variant == "pa_alg2" else ("free",)
    if plans and state.last_kind in plan_after:
        n = cfg.n_recent if cfg.variant == "multi" else 1
        row_a = gram_row(cache, problem, ws[0])
        row_b = gram_row(cache, problem, ws[1])
        got = _best_plan(problem, state, ws[0], ws[1], plan.direction_gradient,
                         plan.curvature, row_a, row_b, n)
        if got is not None:
            return replace(plan, mu=got[0], clipped=False), "planning"
    if cfg.variant == "scaled_newton":
        upd = scaled_newton_update(plan, cfg.scale_factor)
        return upd, ("clipped" if upd.clipped else "free")
    return plan, ("clipped" if plan.clipped else "free")


def select_working_set_pa(problem: TrainingProblem, state: SolverState,
                          cache: Optional[KernelCache] = None,
                          config: Optional[PaConfig] = None) -> tuple[WorkingSet, str]:
    """Pair selection with the adaptive branch rule.

    After a plain step (and at the start) branch "a" runs standard selection.
    Right after a planning step the planning step's own step-to-Newton ratio
    decides: inside [1-eta, 1+eta] branch "b" keeps bound-based selection with
    recently used pairs as replacement candidates, outside branch "c" selects
    by exact clipped gain with the same candidates.  The candidate list after
    a planning step contains the pair the plan assumed would move next, so
    branch "c" realizes at least the planned remainder and the two-step gain
    of an overshooting or undershooting planning step stays bounded below.
    Returns the pair and the branch used.
    """
    if cache is None:
        cache = KernelCache.with_megabytes(64)
    cfg = config or PaConfig()
    plans = cfg.variant in ("pa", "pa_alg2", "multi")
    branch = "a"
    if plans and state.last_kind == "planning":
        r = _prev_ratio(state.last_mu, state.last_mu_star)
        branch = "b" if (1.0 - cfg.eta) <= r <= (1.0 + cfg.eta) else "c"
    i, gmax, _ = scan_extremes(state.gradient, state.in_up, state.in_down)
    if i < 0:
        raise ValueError("no selectable pair: I_up is empty")
    n = cfg.n_recent if cfg.variant == "multi" else 1
    sel = _select_pair(problem, state, cache, int(i), gmax, branch, n)
    if sel is None:
        raise ValueError("no selectable pair: no candidate with positive violation")
    return WorkingSet(sel[0], sel[1]), branch


_DISPLAY = {"smo": "smo", "pa": "pa", "pa_alg2": "pa-alg2", "scaled_newton": "scaled-newton"}


def run_decomposition(problem: TrainingProblem, config: SolverConfig,
                      variant: Optional[str] = None) -> SolveReport:
    """Shared solve loop for all variants.

    Stops when the certificate gap max_{I_up} G - min_{I_down} G is at most
    epsilon (gap -inf when either set is empty) or at the iteration cap.
    The plain solver is this loop with the planner off, so variant "smo"
    reproduces it trace for trace.
    """
    if variant is None:
        variant = getattr(config, "variant", "smo")
    variant = variant.replace("-", "_")
    if variant not in _VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    eta = float(getattr(config, "eta", 0.9))
    factor = float(getattr(config, "scale_factor", 1.1))
    n = int(getattr(config, "n_recent", 1)) if variant == "multi" else 1
    plans = variant in ("pa", "pa_alg2", "multi")
    plan_after = ("free", "clipped") if variant == "pa_alg2" else ("free",)

    state = SolverState.initial(problem, history=n + 1)
    cache = KernelCache.with_megabytes(config.cache_mb)
    alpha = state.alpha
    G = state.gradient
    in_up = state.in_up
    in_down = state.in_down
    lower = problem.lower
    upper = problem.upper
    diag = problem.diagonal
    eps = config.epsilon
    cap = config.max_iters
    instrument = config.instrument
    check_every = config.gradient_check_every
    ratios = array("d") if config.record_step_ratios else None
    trace = [] if config.record_trace else None

    t = 0
    free_steps = clipped_steps = planning_steps = 0
    dbl_viol = dbl_neg = dbl_count = tail_pending = 0
    dbl_min_margin = math.inf
    pend_gain = pend_bound = 0.0
    have_pend = False
    max_sum_violation = 0.0
    max_grad_dev = 0.0
    lemma_floor = 1.0 - eta * eta
    last_mu = 0.0
    last_mu_star = 0.0
    last_kind = ""
    plan_flag = True
    recent = state.recent
    f_run = 0.0
    gap = -math.inf
    converged = False

    t_start = time.perf_counter()
    while True:
        i, gmax, gmin = scan_extremes(G, in_up, in_down)
        gap = float(gmax - gmin) if (i >= 0 and gmin < math.inf) else -math.inf
        if gap <= eps:
            converged = True
            break
        if t >= cap:
            break
        branch = "a"
        if plans and last_kind == "planning":
            r = _prev_ratio(last_mu, last_mu_star)
            branch = "b" if (1.0 - eta) <= r <= (1.0 + eta) else "c"
        sel = _select_pair(problem, state, cache, int(i), gmax, branch, n)
        if sel is None:  # cannot happen while gap > 0; defensive stop
            break
        ws_i, ws_j, q_sel, row_a = sel
        if ws_i != i:
            row_a = gram_row(cache, problem, ws_i)
        row_b = gram_row(cache, problem, ws_j)
        if q_sel is None:
            q_ws = float(diag[ws_i] - 2.0 * row_a[ws_j] + diag[ws_j])
        else:
            q_ws = q_sel
        l_ws = float(G[ws_i] - G[ws_j])
        lo = float(max(lower[ws_i] - alpha[ws_i], alpha[ws_j] - upper[ws_j]))
        hi = float(min(upper[ws_i] - alpha[ws_i], alpha[ws_j] - lower[ws_j]))
        mu_star = _newton_mu(l_ws, q_ws)
        mu = None
        kind = ""
        if plans and last_kind in plan_after:
            got = _best_plan(problem, state, ws_i, ws_j, l_ws, q_ws, row_a, row_b, n)
            if got is not None:
                mu = got[0]
                kind = "planning"
        if mu is None:
            if variant == "scaled_newton":
                target = factor * mu_star
                mu = min(max(target, lo), hi)
                kind = "free" if mu == target else "clipped"
            else:
                mu = min(max(mu_star, lo), hi)
                kind = "free" if mu == mu_star else "clipped"
        _apply_core(problem, state, ws_i, ws_j, mu, lo, hi, row_a, row_b)
        gain = _gain(l_ws, q_ws, mu)
        f_run += gain
        if have_pend:
            # close the pending planning record with the follow-up step's gain
            dgain = pend_gain + gain
            tol = 1e-10 * max(1.0, abs(f_run))
            margin = dgain - (lemma_floor * pend_bound - tol)
            if margin < dbl_min_margin:
                dbl_min_margin = margin
            if margin < 0.0:
                dbl_viol += 1
            if dgain < -tol:
                dbl_neg += 1
            dbl_count += 1
            have_pend = False
        if kind == "planning":
            planning_steps += 1
            pend_gain = gain
            pend_bound = _bound_gain(l_ws, q_ws)
            have_pend = True
            if ratios is not None:
                # planning pairs always have a finite positive Newton step
                ratios.append(mu / mu_star if mu_star != 0.0 else 0.0)
        elif kind == "free":
            free_steps += 1
        else:
            clipped_steps += 1
        t += 1
        last_mu = mu
        last_mu_star = mu_star
        last_kind = kind
        plan_flag = kind == "planning"
        recent.appendleft((ws_i, ws_j, q_ws))
        if trace is not None:
            trace.append((ws_i, ws_j, float(mu), kind))
        if instrument:
            s = abs(float(np.sum(alpha)))
            if s > max_sum_violation:
                max_sum_violation = s
        if check_every and t % check_every == 0:
            ref = recompute_gradient(problem, alpha, cache)
            dev = float(np.max(np.abs(G - ref)))
            if dev > max_grad_dev:
                max_grad_dev = dev
    elapsed = time.perf_counter() - t_start

    if have_pend:
        tail_pending = 1
    state.iteration = t
    state.accumulated_gain = f_run
    state.last_mu = last_mu
    state.last_mu_star = last_mu_star
    state.last_kind = last_kind
    state.plan_flag = plan_flag
    f_final = objective(problem, alpha, cache)
    samples = np.asarray(ratios, dtype=np.float64) if ratios is not None else np.empty(0)
    name = _DISPLAY.get(variant, f"multi:{n}")
    return SolveReport(
        solver=name, dataset="", permutation=0, seed=0,
        iterations=t, time_s=elapsed, f_final=f_final, kkt_gap=gap,
        free_steps=free_steps, clipped_steps=clipped_steps,
        planning_steps=planning_steps, converged=converged,
        step_ratio_samples=samples,
        planning_double_steps=dbl_count,
        planning_bound_violations=dbl_viol,
        planning_bound_min_margin=dbl_min_margin,
        planning_negative_doubles=dbl_neg,
        planning_tail_pending=tail_pending,
        max_sum_violation=max_sum_violation,
        max_gradient_deviation=max_grad_dev,
        trace=trace,
        alpha=alpha,
    )


def recompute_gradient(problem: TrainingProblem, alpha: np.ndarray,
                       cache: Optional[KernelCache] = None) -> np.ndarray:
    """G = y - K alpha rebuilt from Gram rows (reference for drift checks)."""
    if cache is None:
        cache = KernelCache.with_megabytes(64)
    ref = np.array(problem.y, dtype=np.float64)
    for nn in np.flatnonzero(alpha):
        ref -= alpha[nn] * gram_row(cache, problem, int(nn))
    return ref


def pa_solve(problem: TrainingProblem, config: Optional[PaConfig] = None) -> SolveReport:
    """Solve with the planning-ahead rule (or the variant named in the config)."""
    cfg = config or PaConfig()
    return run_decomposition(problem, cfg, variant=getattr(cfg, "variant", "pa"))

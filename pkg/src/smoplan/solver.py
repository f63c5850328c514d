"""Pairwise-decomposition solver core: state, step mathematics, pair selection.

Each iteration picks an ordered pair (i, j), moves alpha by mu along the
direction e_i - e_j (which preserves the equality constraint), and maintains
the gradient G = y - K alpha incrementally.  The step size is the Newton step
l / Q clipped to the box, where l = G_i - G_j is the direction derivative and
Q = K_ii - 2 K_ij + K_jj the curvature along the pair direction.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ._kernels import scan_extremes, pick_second_bound, update_gradient
from .problem import KernelCache, TrainingProblem, gram_row


class SolverNumericsError(RuntimeError):
    """A step landed outside the box by more than rounding can explain."""


class WorkingSet(NamedTuple):
    i: int
    j: int


@dataclass(frozen=True)
class StepPlan:
    """A fully resolved pair step: scalars of the 1-D sub-problem and the chosen mu."""

    working_set: WorkingSet
    direction_gradient: float  # l = G_i - G_j
    curvature: float           # Q = K_ii - 2 K_ij + K_jj
    lo: float                  # feasible step interval lower end (<= 0)
    hi: float                  # feasible step interval upper end (>= 0)
    mu_star: float             # unconstrained Newton step, may be 0 or +-inf
    mu: float                  # clipped step actually taken
    clipped: bool


@dataclass
class SolverState:
    """Mutable solve state: iterate, gradient, membership masks, bookkeeping."""

    alpha: np.ndarray
    gradient: np.ndarray
    in_up: np.ndarray
    in_down: np.ndarray
    iteration: int = 0
    accumulated_gain: float = 0.0
    plan_flag: bool = True
    last_kind: str = ""  # "", "free", "clipped", "planning"
    last_mu: float = 0.0
    last_mu_star: float = 0.0
    # most recent first: (i, j, curvature) of previously used pairs
    recent: deque = field(default_factory=lambda: deque(maxlen=2))

    @classmethod
    def initial(cls, problem: TrainingProblem, history: int = 2) -> "SolverState":
        l = len(problem)
        alpha = np.zeros(l, dtype=np.float64)
        gradient = np.array(problem.y, dtype=np.float64)
        in_up = alpha < problem.upper
        in_down = alpha > problem.lower
        return cls(alpha=alpha, gradient=gradient, in_up=in_up, in_down=in_down,
                   recent=deque(maxlen=max(history, 2)))


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-3
    max_iters: int = 100_000_000
    cache_mb: float = 64.0
    record_step_ratios: bool = True
    record_trace: bool = False
    instrument: bool = False
    gradient_check_every: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.cache_mb < 0:
            raise ValueError("cache_mb must be >= 0")


@dataclass
class SolveReport:
    """Outcome of one solver run; bench fills solver/dataset/perm/seed fields."""

    solver: str
    dataset: str
    permutation: int
    seed: int
    iterations: int
    time_s: float
    f_final: float
    kkt_gap: float
    free_steps: int
    clipped_steps: int
    planning_steps: int
    converged: bool
    step_ratio_samples: np.ndarray
    planning_double_steps: int = 0
    planning_bound_violations: int = 0
    planning_bound_min_margin: float = math.inf
    planning_negative_doubles: int = 0
    planning_tail_pending: int = 0
    max_sum_violation: float = 0.0
    max_gradient_deviation: float = 0.0
    trace: Optional[list] = None
    alpha: Optional[np.ndarray] = None


def index_sets(problem: TrainingProblem, state: SolverState) -> tuple[np.ndarray, np.ndarray]:
    """Ascent-feasible index sets from exact bound comparisons.

    I_up = {n: alpha_n < U_n} can absorb a positive move, I_down = {n: alpha_n > L_n}
    a negative one.  No epsilon: a variable exactly at a bound is outside the set.
    """
    up = np.flatnonzero(state.alpha < problem.upper)
    down = np.flatnonzero(state.alpha > problem.lower)
    return up, down


def kkt_gap(problem: TrainingProblem, state: SolverState) -> float:
    """max G over I_up minus min G over I_down; -inf when either set is empty."""
    up, down = index_sets(problem, state)
    if up.size == 0 or down.size == 0:
        return -math.inf
    return float(np.max(state.gradient[up]) - np.min(state.gradient[down]))


def _bound_gain(l: float, q: float) -> float:
    # gain upper bound 0.5 l^2 / Q of the unclipped Newton step; flat direction
    # with nonzero slope has unbounded gain, with zero slope no gain at all
    if q > 0.0:
        return 0.5 * l * l / q
    if l == 0.0:
        return 0.0
    return math.inf


def _newton_mu(l: float, q: float) -> float:
    if q > 0.0:
        return l / q
    if l > 0.0:
        return math.inf
    if l < 0.0:
        return -math.inf
    return 0.0


def _gain(l: float, q: float, mu: float) -> float:
    return l * mu - 0.5 * max(q, 0.0) * mu * mu


def _clipped_gain(l: float, q: float, lo: float, hi: float) -> tuple[float, float]:
    mu = min(max(_newton_mu(l, q), lo), hi)
    return mu, _gain(l, q, mu)


def _pair_quad(problem: TrainingProblem, cache: KernelCache, i: int, j: int) -> float:
    row_i = gram_row(cache, problem, i)
    d = problem.diagonal
    return float(d[i] - 2.0 * row_i[j] + d[j])


def gain_bound(problem: TrainingProblem, state: SolverState, ws: WorkingSet,
               cache: Optional[KernelCache] = None) -> float:
    """Gain of the unclipped Newton step along the pair: 0.5 l^2 / Q, extended reals."""
    if cache is None:
        cache = KernelCache.with_megabytes(64)
    i, j = ws
    l = float(state.gradient[i] - state.gradient[j])
    return _bound_gain(l, _pair_quad(problem, cache, i, j))


def newton_step(problem: TrainingProblem, state: SolverState, ws: WorkingSet,
                cache: Optional[KernelCache] = None) -> StepPlan:
    """Clipped Newton step along the pair direction.

    The feasible interval [lo, hi] always contains 0 for a feasible iterate;
    a degenerate direction (Q = 0) pushes mu_star to +-inf and the clip lands
    on the corresponding interval end.
    """
    if cache is None:
        cache = KernelCache.with_megabytes(64)
    i, j = ws
    a = state.alpha
    l = float(state.gradient[i] - state.gradient[j])
    q = _pair_quad(problem, cache, i, j)
    lo = max(problem.lower[i] - a[i], a[j] - problem.upper[j])
    hi = min(problem.upper[i] - a[i], a[j] - problem.lower[j])
    mu_star = _newton_mu(l, q)
    mu = min(max(mu_star, lo), hi)
    return StepPlan(working_set=WorkingSet(int(i), int(j)), direction_gradient=l,
                    curvature=q, lo=float(lo), hi=float(hi), mu_star=mu_star,
                    mu=float(mu), clipped=(mu != mu_star))


def exact_gain(plan: StepPlan, mu: Optional[float] = None) -> float:
    """Objective increase of stepping mu along the plan's pair: l mu - 0.5 Q mu^2."""
    if mu is None:
        mu = plan.mu
    return _gain(plan.direction_gradient, plan.curvature, mu)


def select_working_set_standard(problem: TrainingProblem, state: SolverState,
                                cache: Optional[KernelCache] = None) -> tuple[WorkingSet, float]:
    """Most-violating first index, second index by largest gain bound.

    i maximizes G over I_up; j maximizes 0.5 l^2 / Q over I_down candidates with
    G_j < G_i (so the pair has positive direction derivative and the clipped
    step cannot be zero).  Ties break to the smallest index.  Returns the pair
    and its gain bound; raises if no violating pair exists.
    """
    if cache is None:
        cache = KernelCache.with_megabytes(64)
    G = state.gradient
    i, gmax, _ = scan_extremes(G, state.in_up, state.in_down)
    if i < 0:
        raise ValueError("no selectable pair: I_up is empty")
    i = int(i)
    row_i = gram_row(cache, problem, i)
    d = problem.diagonal
    j, val = pick_second_bound(G, row_i, d, state.in_down, i, gmax, d[i])
    if j < 0:
        raise ValueError("no selectable pair: no candidate with positive violation")
    return WorkingSet(i, int(j)), float(val)


def _land(value_new: float, lo_bnd: float, hi_bnd: float, n: int) -> float:
    # contract gate: anything beyond rounding-scale overshoot is a solver bug
    if value_new < lo_bnd:
        if lo_bnd - value_new > 1e-12 * max(1.0, abs(lo_bnd), abs(hi_bnd)):
            raise SolverNumericsError(
                f"alpha[{n}] = {value_new!r} violates lower bound {lo_bnd!r}")
        return lo_bnd
    if value_new > hi_bnd:
        if value_new - hi_bnd > 1e-12 * max(1.0, abs(lo_bnd), abs(hi_bnd)):
            raise SolverNumericsError(
                f"alpha[{n}] = {value_new!r} violates upper bound {hi_bnd!r}")
        return hi_bnd
    return value_new


def _apply_core(problem: TrainingProblem, state: SolverState, i: int, j: int,
                mu: float, lo: float, hi: float,
                row_i: np.ndarray, row_j: np.ndarray) -> None:
    """Move alpha by mu along (i, j), update gradient and membership masks.

    A step clipped exactly onto an interval end lands on the box bound by
    assignment, not arithmetic, so bound membership is exact afterwards.
    """
    a = state.alpha
    lower = problem.lower
    upper = problem.upper
    ai_old = a[i]
    aj_old = a[j]
    if mu == hi:
        ai_new = upper[i] if hi == upper[i] - ai_old else ai_old + mu
        aj_new = lower[j] if hi == aj_old - lower[j] else aj_old - mu
    elif mu == lo:
        ai_new = lower[i] if lo == lower[i] - ai_old else ai_old + mu
        aj_new = upper[j] if lo == aj_old - upper[j] else aj_old - mu
    else:
        ai_new = ai_old + mu
        aj_new = aj_old - mu
    a[i] = _land(ai_new, lower[i], upper[i], i)
    a[j] = _land(aj_new, lower[j], upper[j], j)
    update_gradient(state.gradient, row_i, row_j, mu)
    state.in_up[i] = a[i] < upper[i]
    state.in_down[i] = a[i] > lower[i]
    state.in_up[j] = a[j] < upper[j]
    state.in_down[j] = a[j] > lower[j]


def apply_step(problem: TrainingProblem, state: SolverState, plan: StepPlan,
               cache: Optional[KernelCache] = None, kind: Optional[str] = None) -> float:
    """Apply a resolved step: mutate alpha, gradient, masks, counters; return the gain."""
    if cache is None:
        cache = KernelCache.with_megabytes(64)
    i, j = plan.working_set
    row_i = gram_row(cache, problem, i)
    row_j = gram_row(cache, problem, j)
    _apply_core(problem, state, i, j, plan.mu, plan.lo, plan.hi, row_i, row_j)
    gain = exact_gain(plan)
    state.iteration += 1
    state.accumulated_gain += gain
    state.last_mu = plan.mu
    state.last_mu_star = plan.mu_star
    state.last_kind = kind if kind is not None else ("clipped" if plan.clipped else "free")
    state.plan_flag = state.last_kind == "planning"
    state.recent.appendleft((i, j, plan.curvature))
    return gain


def smo_solve(problem: TrainingProblem, config: Optional[SolverConfig] = None) -> SolveReport:
    """Plain decomposition solve: standard selection, clipped Newton steps,
    stop when the certificate gap max_{I_up} G - min_{I_down} G drops to epsilon."""
    from .planning import run_decomposition

    return run_decomposition(problem, config or SolverConfig(), variant="smo")


def feasibility_violation(problem: TrainingProblem, alpha: np.ndarray) -> tuple[float, float]:
    """(max box overshoot, |sum alpha|) of an iterate; both 0 for a feasible point."""
    over = np.maximum(alpha - problem.upper, problem.lower - alpha)
    box = float(max(np.max(over), 0.0)) if len(alpha) else 0.0
    return box, abs(float(np.sum(alpha)))

"""Independent reference machinery for small instances and optimality checks.

Everything here recomputes from the problem definition alone: the dense Gram
matrix is assembled directly from the kernel formula, gradients are rebuilt
from scratch, and the reference solver enumerates active sets instead of
iterating.  None of the decomposition stepping or selection code is used, so
agreement between the two is meaningful evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem import TrainingProblem

_MAX_REFERENCE_VARS = 12


class OracleError(RuntimeError):
    """The enumeration found no certifiable optimum (should not happen on sane instances)."""


@dataclass(frozen=True)
class OracleSolution:
    alpha: np.ndarray
    f_star: float
    bias: float
    kkt_gap: float


def dense_gram(problem: TrainingProblem) -> np.ndarray:
    """Full Gram matrix assembled directly from the kernel definition."""
    k = problem.kernel
    if k.kind == "precomputed":
        ids = problem._precomputed_ids
        return np.array(k.matrix[np.ix_(ids, ids)], dtype=np.float64)
    X = problem.dataset.feature_matrix
    P = np.asarray((X @ X.T).toarray(), dtype=np.float64)
    if k.kind == "linear":
        return P
    sq = np.asarray(problem.dataset.squared_norms)
    d2 = sq[:, None] + sq[None, :] - 2.0 * P
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-k.gamma * d2)


def dense_objective(problem: TrainingProblem, alpha: np.ndarray) -> float:
    alpha = np.asarray(alpha, dtype=np.float64)
    K = dense_gram(problem)
    return float(problem.y @ alpha - 0.5 * alpha @ (K @ alpha))


def dense_gradient(problem: TrainingProblem, alpha: np.ndarray) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    return problem.y - dense_gram(problem) @ alpha


def kkt_gap_dense(problem: TrainingProblem, alpha: np.ndarray) -> float:
    """Certificate gap from scratch: max G over I_up minus min G over I_down."""
    alpha = np.asarray(alpha, dtype=np.float64)
    G = dense_gradient(problem, alpha)
    up = alpha < problem.upper
    down = alpha > problem.lower
    if not up.any() or not down.any():
        return -math.inf
    return float(np.max(G[up]) - np.min(G[down]))


def check_gradient(problem: TrainingProblem, alpha: np.ndarray, gradient: np.ndarray) -> float:
    """Max absolute deviation of a maintained gradient from y - K alpha."""
    ref = dense_gradient(problem, alpha)
    return float(np.max(np.abs(np.asarray(gradient, dtype=np.float64) - ref)))


@dataclass(frozen=True)
class KktCheck:
    """Outcome of a from-scratch certificate check; truthy iff it passed."""

    ok: bool
    gap: float

    def __bool__(self) -> bool:
        return self.ok


def verify_kkt(problem: TrainingProblem, alpha: np.ndarray, epsilon: float) -> KktCheck:
    """Recompute the certificate gap from scratch; passes iff gap <= epsilon.

    alpha must be feasible: exact box containment (solver and reference
    outputs land on bounds by assignment) and |sum alpha| <= 1e-9 * max(1, C*l)
    on the equality constraint.  Infeasible input raises ValueError.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (len(problem),):
        raise ValueError(f"alpha has shape {alpha.shape}, expected ({len(problem)},)")
    if np.any(alpha < problem.lower) or np.any(alpha > problem.upper):
        raise ValueError("alpha violates the box bounds")
    if abs(float(np.sum(alpha))) > 1e-9 * max(1.0, problem.C * len(problem)):
        raise ValueError("alpha violates the equality constraint")
    gap = kkt_gap_dense(problem, alpha)
    return KktCheck(ok=gap <= epsilon, gap=gap)


def dense_reference_solve(problem: TrainingProblem, gap_tol: float = 1e-9) -> OracleSolution:
    """Global optimum of the dual by active-set enumeration.

    Every assignment of each variable to {at lower, at upper, free} is tried:
    free variables and the equality multiplier come from the bordered linear
    system, candidates get clamped and checked for feasibility and a
    certificate gap <= gap_tol, and the certified candidate with the largest
    objective wins.  3^l assignments, so instances are capped at l = 12.
    """
    l = len(problem)
    if l > _MAX_REFERENCE_VARS:
        raise ValueError(f"reference solver handles at most {_MAX_REFERENCE_VARS} variables, got {l}")
    K = dense_gram(problem)
    y = np.asarray(problem.y)
    L = np.asarray(problem.lower)
    U = np.asarray(problem.upper)
    tol_box = 1e-9 * max(1.0, problem.C)
    tol_eq = 1e-9 * max(1.0, problem.C * l)
    res_tol = 1e-7 * max(1.0, float(np.max(np.abs(y))), problem.C * float(np.max(np.abs(K))))

    best_f = -math.inf
    best_alpha = None
    best_bias = 0.0
    best_gap = math.inf

    for mask in range(1 << l):
        free = [nn for nn in range(l) if (mask >> nn) & 1]
        fixed = [nn for nn in range(l) if not (mask >> nn) & 1]
        k = len(free)
        nfix = l - k
        cols = 1 << nfix
        A = np.empty((l, cols), dtype=np.float64)
        if nfix:
            bits = (np.arange(cols, dtype=np.int64)[None, :] >> np.arange(nfix, dtype=np.int64)[:, None]) & 1
            A[fixed] = np.where(bits == 1, U[fixed, None], L[fixed, None])
        res_ok = np.ones(cols, dtype=bool)
        if k:
            M = np.zeros((k + 1, k + 1), dtype=np.float64)
            M[:k, :k] = K[np.ix_(free, free)]
            M[:k, k] = 1.0
            M[k, :k] = 1.0
            R = np.empty((k + 1, cols), dtype=np.float64)
            R[:k] = y[free, None]
            if nfix:
                R[:k] -= K[np.ix_(free, fixed)] @ A[fixed]
                R[k] = -A[fixed].sum(axis=0)
            else:
                R[k] = 0.0
            try:
                X = np.linalg.solve(M, R)
            except np.linalg.LinAlgError:
                X = np.linalg.lstsq(M, R, rcond=None)[0]
            res_ok = np.max(np.abs(M @ X - R), axis=0) <= res_tol
            A[free] = X[:k]
            bias_row = X[k]
        else:
            bias_row = np.zeros(cols, dtype=np.float64)

        feas = res_ok & np.all(A >= L[:, None] - tol_box, axis=0) & np.all(A <= U[:, None] + tol_box, axis=0)
        if not feas.any():
            continue
        Ac = np.clip(A, L[:, None], U[:, None])
        feas &= np.abs(Ac.sum(axis=0)) <= tol_eq
        if not feas.any():
            continue
        KA = K @ Ac
        Gc = y[:, None] - KA
        fvals = y @ Ac - 0.5 * np.einsum("nc,nc->c", Ac, KA)
        up = Ac < U[:, None]
        down = Ac > L[:, None]
        gmax = np.max(np.where(up, Gc, -np.inf), axis=0)
        gmin = np.min(np.where(down, Gc, np.inf), axis=0)
        gaps = gmax - gmin
        ok = feas & (gaps <= gap_tol)
        if not ok.any():
            continue
        cand = np.flatnonzero(ok)
        c = cand[np.argmax(fvals[cand])]
        if fvals[c] > best_f:
            best_f = float(fvals[c])
            best_alpha = Ac[:, c].copy()
            best_gap = float(gaps[c])
            if k:
                best_bias = float(bias_row[c])
            elif math.isfinite(gmax[c]) and math.isfinite(gmin[c]):
                best_bias = float(0.5 * (gmax[c] + gmin[c]))
            else:
                best_bias = 0.0

    if best_alpha is None:
        raise OracleError("active-set enumeration certified no candidate")
    best_alpha.setflags(write=False)
    return OracleSolution(alpha=best_alpha, f_star=best_f, bias=best_bias, kkt_gap=best_gap)

"""Per-iteration array primitives, compiled with numba when available.

Selection semantics shared by both implementations:

* the first (smallest-index) maximizer wins ties,
* pair candidates are restricted to strictly positive violation
  (G_n < G_i for the chosen i), so the clipped step is never zero,
* a nonpositive curvature denominator means the direction is flat or
  numerically degenerate: the gain bound is +inf and the exact gain is
  linear in the step.

The pure-numpy fallbacks compute the same values element-for-element so test
results do not depend on whether numba compiled.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def _scan_extremes_nb(G, in_up, in_down):
    i = -1
    gmax = -np.inf
    gmin = np.inf
    for n in range(G.shape[0]):
        g = G[n]
        if in_up[n] and g > gmax:
            gmax = g
            i = n
        if in_down[n] and g < gmin:
            gmin = g
    return i, gmax, gmin


def _scan_extremes_np(G, in_up, in_down):
    up = np.flatnonzero(in_up)
    if up.size:
        k = int(np.argmax(G[up]))
        i, gmax = int(up[k]), float(G[up[k]])
    else:
        i, gmax = -1, -np.inf
    down = np.flatnonzero(in_down)
    gmin = float(np.min(G[down])) if down.size else np.inf
    return i, gmax, gmin


@njit(cache=True)
def _pick_second_bound_nb(G, row_i, diag, in_down, i, gi, qii):
    j = -1
    best = -1.0
    for n in range(G.shape[0]):
        if not in_down[n] or n == i:
            continue
        g = G[n]
        if g >= gi:
            continue
        l = gi - g
        q = qii - 2.0 * row_i[n] + diag[n]
        if q > 0.0:
            val = 0.5 * l * l / q
        else:
            val = np.inf
        if val > best:
            best = val
            j = n
    return j, best


def _pick_second_bound_np(G, row_i, diag, in_down, i, gi, qii):
    cand = np.flatnonzero(in_down & (G < gi))
    cand = cand[cand != i]
    if cand.size == 0:
        return -1, -1.0
    l = gi - G[cand]
    q = qii - 2.0 * row_i[cand] + diag[cand]
    pos = q > 0.0
    val = np.where(pos, 0.5 * l * l / np.where(pos, q, 1.0), np.inf)
    k = int(np.argmax(val))
    return int(cand[k]), float(val[k])


@njit(cache=True)
def _pick_second_exact_nb(G, row_i, diag, alpha, lower, upper, in_down, i, gi, qii):
    j = -1
    best = -1.0
    head_i = upper[i] - alpha[i]
    for n in range(G.shape[0]):
        if not in_down[n] or n == i:
            continue
        g = G[n]
        if g >= gi:
            continue
        l = gi - g
        q = qii - 2.0 * row_i[n] + diag[n]
        hi = alpha[n] - lower[n]
        if head_i < hi:
            hi = head_i
        if q > 0.0:
            mu = l / q
            if mu > hi:
                mu = hi
            val = l * mu - 0.5 * q * mu * mu
        else:
            val = l * hi
        if val > best:
            best = val
            j = n
    return j, best


def _pick_second_exact_np(G, row_i, diag, alpha, lower, upper, in_down, i, gi, qii):
    cand = np.flatnonzero(in_down & (G < gi))
    cand = cand[cand != i]
    if cand.size == 0:
        return -1, -1.0
    l = gi - G[cand]
    q = qii - 2.0 * row_i[cand] + diag[cand]
    hi = np.minimum(upper[i] - alpha[i], alpha[cand] - lower[cand])
    pos = q > 0.0
    mu = np.where(pos, np.minimum(l / np.where(pos, q, 1.0), hi), hi)
    val = l * mu - 0.5 * np.where(pos, q, 0.0) * mu * mu
    k = int(np.argmax(val))
    return int(cand[k]), float(val[k])


@njit(cache=True)
def _update_gradient_nb(G, row_i, row_j, mu):
    for n in range(G.shape[0]):
        G[n] -= mu * (row_i[n] - row_j[n])


def _update_gradient_np(G, row_i, row_j, mu):
    G -= mu * (row_i - row_j)


if HAVE_NUMBA:
    scan_extremes = _scan_extremes_nb
    pick_second_bound = _pick_second_bound_nb
    pick_second_exact = _pick_second_exact_nb
    update_gradient = _update_gradient_nb
else:  # pragma: no cover
    scan_extremes = _scan_extremes_np
    pick_second_bound = _pick_second_bound_np
    pick_second_exact = _pick_second_exact_np
    update_gradient = _update_gradient_np

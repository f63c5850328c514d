"""Shared builders for the test suite.

The instances built here are deliberately tiny so the independent dense
reference solver can certify optima, and deterministic so failures replay.
"""

from __future__ import annotations

import numpy as np
import pytest

from smoplan import Dataset, KernelSpec, SolverState, make_problem


def toy2(C: float = 1.0):
    """Two orthonormal points with opposite labels: Gram matrix is the identity.

    The optimum at C >= 1 is alpha = (1, -1) with objective 1.
    """
    ds = Dataset(points=(((1, 1.0),), ((2, 1.0),)), labels=(1.0, -1.0))
    return make_problem(ds, KernelSpec("linear"), C=C)


def random_dataset(rng: np.random.Generator, l: int, d: int = 3) -> Dataset:
    """Dense random points with balanced-ish labels (never single-class)."""
    X = rng.normal(size=(l, d))
    y = rng.choice([-1.0, 1.0], size=l)
    if np.all(y == y[0]):
        y[0] = -y[0]
    points = tuple(
        tuple((k + 1, float(v)) for k, v in enumerate(row) if v != 0.0)
        for row in X
    )
    return Dataset(points=points, labels=tuple(float(v) for v in y))


def random_problem(seed: int, l: int | None = None, C: float | None = None,
                   kind: str | None = None):
    """Seeded random training problem over mixed kernel kinds.

    kind "precomputed" draws K = A^T A with A possibly rank-deficient, so
    singular Gram matrices (flat directions) stay represented.
    """
    rng = np.random.default_rng(seed)
    if l is None:
        l = int(rng.integers(2, 9))
    if C is None:
        C = float(rng.choice([0.1, 1.0, 10.0]))
    if kind is None:
        kind = ("linear", "gaussian", "precomputed")[int(rng.integers(3))]
    if kind == "precomputed":
        r = int(rng.integers(1, l + 1))
        A = rng.normal(size=(r, l))
        K = A.T @ A
        K = 0.5 * (K + K.T)
        y = rng.choice([-1.0, 1.0], size=l)
        if np.all(y == y[0]):
            y[0] = -y[0]
        points = tuple(((1, float(i + 1)),) for i in range(l))
        ds = Dataset(points=points, labels=tuple(float(v) for v in y))
        return make_problem(ds, KernelSpec("precomputed", matrix=K), C=C)
    ds = random_dataset(rng, l)
    spec = KernelSpec("gaussian", gamma=float(rng.uniform(0.2, 1.5))) \
        if kind == "gaussian" else KernelSpec("linear")
    return make_problem(ds, spec, C=C)


def fresh(problem) -> SolverState:
    return SolverState.initial(problem)


@pytest.fixture
def toy_problem():
    return toy2()

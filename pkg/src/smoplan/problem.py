"""Training-problem definition: datasets, kernels, box bounds, and the Gram row cache.

The dual problem solved by this package is

    maximize    f(alpha) = y . alpha - 0.5 * alpha' K alpha
    subject to  sum(alpha) = 0,  L_n <= alpha_n <= U_n

with one variable per training point, K the kernel Gram matrix, and the box
derived from the labels: L_n = min(0, y_n * C), U_n = max(0, y_n * C).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

SparseVector = tuple[tuple[int, float], ...]

_VALID_KINDS = ("gaussian", "linear", "precomputed")


def _as_sparse_vector(point: Iterable[tuple[int, float]]) -> SparseVector:
    return tuple((int(j), float(v)) for j, v in point)


def _check_point(point: SparseVector, where: str) -> None:
    prev = 0
    for j, v in point:
        if j < 1:
            raise ValueError(f"{where}: feature index {j} is not >= 1")
        if j <= prev:
            raise ValueError(f"{where}: feature indices must be strictly increasing, got {j} after {prev}")
        if not np.isfinite(v):
            raise ValueError(f"{where}: feature value {v!r} is not finite")
        prev = j


@dataclass(frozen=True)
class Dataset:
    """Labeled points with sparse features (1-based feature indices).

    Points are tuples of (index, value) pairs with strictly increasing
    indices; labels are +1 or -1.  An empty dataset is representable (the
    parser must accept empty input) but cannot be turned into a problem.
    """

    points: tuple[SparseVector, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        points = tuple(_as_sparse_vector(p) for p in self.points)
        labels = tuple(int(lab) for lab in self.labels)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)
        if len(points) != len(labels):
            raise ValueError(f"{len(points)} points but {len(labels)} labels")
        for n, lab in enumerate(labels):
            if lab not in (-1, 1):
                raise ValueError(f"label {lab!r} at position {n} is not +1 or -1")
        for n, p in enumerate(points):
            _check_point(p, f"point {n}")

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def n_features(self) -> int:
        return max((p[-1][0] for p in self.points if p), default=0)

    @cached_property
    def feature_matrix(self) -> sp.csr_matrix:
        """Points stacked as a CSR matrix, feature index j stored in column j-1."""
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for p in self.points:
            for j, v in p:
                indices.append(j - 1)
                data.append(v)
            indptr.append(len(indices))
        shape = (len(self.points), max(self.n_features, 1))
        return sp.csr_matrix(
            (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
            shape=shape,
        )

    @cached_property
    def label_vector(self) -> np.ndarray:
        y = np.asarray(self.labels, dtype=np.float64)
        y.setflags(write=False)
        return y

    @cached_property
    def squared_norms(self) -> np.ndarray:
        X = self.feature_matrix
        sq = np.asarray(X.multiply(X).sum(axis=1), dtype=np.float64).ravel()
        sq.setflags(write=False)
        return sq


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Kernel description: gaussian(gamma), linear, or a precomputed Gram matrix."""

    kind: str
    gamma: float = 0.0
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in _VALID_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian":
            if not (np.isfinite(self.gamma) and self.gamma > 0):
                raise ValueError(f"gaussian kernel needs gamma > 0, got {self.gamma!r}")
        if self.kind == "precomputed":
            if self.matrix is None:
                raise ValueError("precomputed kernel needs a matrix")
            M = np.array(self.matrix, dtype=np.float64)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ValueError(f"precomputed matrix must be square, got shape {M.shape}")
            if not np.isfinite(M).all():
                raise ValueError("precomputed matrix has non-finite entries")
            if M.size and np.max(np.abs(M - M.T)) > 1e-12:
                raise ValueError("precomputed matrix is not symmetric (tolerance 1e-12)")
            M.setflags(write=False)
            object.__setattr__(self, "matrix", M)
        elif self.matrix is not None:
            raise ValueError(f"{self.kind} kernel takes no matrix")

    @classmethod
    def gaussian_kernel(cls, gamma: float) -> "KernelSpec":
        return cls(kind="gaussian", gamma=float(gamma))

    @classmethod
    def linear_kernel(cls) -> "KernelSpec":
        return cls(kind="linear")

    @classmethod
    def precomputed_kernel(cls, matrix) -> "KernelSpec":
        return cls(kind="precomputed", matrix=np.asarray(matrix, dtype=np.float64))


def _sparse_dot(a: SparseVector, b: SparseVector) -> float:
    out = 0.0
    ia = ib = 0
    while ia < len(a) and ib < len(b):
        ja, va = a[ia]
        jb, vb = b[ib]
        if ja == jb:
            out += va * vb
            ia += 1
            ib += 1
        elif ja < jb:
            ia += 1
        else:
            ib += 1
    return out


def _sparse_sqdist(a: SparseVector, b: SparseVector) -> float:
    out = 0.0
    ia = ib = 0
    while ia < len(a) and ib < len(b):
        ja, va = a[ia]
        jb, vb = b[ib]
        if ja == jb:
            d = va - vb
            out += d * d
            ia += 1
            ib += 1
        elif ja < jb:
            out += va * va
            ia += 1
        else:
            out += vb * vb
            ib += 1
    while ia < len(a):
        va = a[ia][1]
        out += va * va
        ia += 1
    while ib < len(b):
        vb = b[ib][1]
        out += vb * vb
        ib += 1
    return out


def _precomputed_id(point: SparseVector, where: str) -> int:
    # id singleton convention: a point under a precomputed kernel is ((1, row_id),)
    # with row_id the 1-based index into the stored matrix.
    if len(point) != 1 or point[0][0] != 1:
        raise IndexError(f"{where}: precomputed kernel expects an id singleton ((1, row_id),), got {point!r}")
    rid = point[0][1]
    if rid != int(rid):
        raise IndexError(f"{where}: precomputed row id {rid!r} is not an integer")
    return int(rid)


def kernel_eval(spec: KernelSpec, a, b) -> float:
    """Evaluate the kernel on two sparse vectors.

    Vectors are (index, value) pair sequences with strictly increasing
    1-based indices.  Under a precomputed kernel each vector is an id
    singleton ((1, row_id),) and the value is looked up in the stored matrix;
    ids outside the matrix raise IndexError.
    """
    a = _as_sparse_vector(a)
    b = _as_sparse_vector(b)
    if spec.kind == "gaussian":
        return float(np.exp(-spec.gamma * _sparse_sqdist(a, b)))
    if spec.kind == "linear":
        return float(_sparse_dot(a, b))
    M = spec.matrix
    ia = _precomputed_id(a, "first argument")
    ib = _precomputed_id(b, "second argument")
    m = M.shape[0]
    if not (1 <= ia <= m) or not (1 <= ib <= m):
        raise IndexError(f"precomputed lookup ({ia}, {ib}) outside 1..{m}")
    return float(M[ia - 1, ib - 1])


@dataclass(frozen=True, eq=False)
class TrainingProblem:
    """A dataset bound to a kernel and a box: the dual QP instance."""

    dataset: Dataset
    kernel: KernelSpec
    C: float
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.dataset)

    @property
    def y(self) -> np.ndarray:
        return self.dataset.label_vector

    @cached_property
    def diagonal(self) -> np.ndarray:
        """K_nn for every n, computed without materializing rows."""
        l = len(self)
        if self.kernel.kind == "gaussian":
            d = np.ones(l, dtype=np.float64)
        elif self.kernel.kind == "linear":
            d = np.array(self.dataset.squared_norms, dtype=np.float64)
        else:
            ids = self._precomputed_ids
            d = np.array(self.kernel.matrix[ids, ids], dtype=np.float64)
        d.setflags(write=False)
        return d

    @cached_property
    def _precomputed_ids(self) -> np.ndarray:
        ids = np.empty(len(self), dtype=np.int64)
        m = self.kernel.matrix.shape[0]
        for n, p in enumerate(self.dataset.points):
            rid = _precomputed_id(p, f"point {n}")
            if not (1 <= rid <= m):
                raise IndexError(f"point {n}: precomputed row id {rid} outside 1..{m}")
            ids[n] = rid - 1
        ids.setflags(write=False)
        return ids


def make_problem(dataset: Dataset, kernel: KernelSpec, C: float) -> TrainingProblem:
    """Bind dataset and kernel into a QP instance with box L_n = min(0, y_n C), U_n = max(0, y_n C)."""
    if len(dataset) == 0:
        raise ValueError("cannot build a problem from an empty dataset")
    if not (np.isfinite(C) and C > 0):
        raise ValueError(f"C must be positive and finite, got {C!r}")
    C = float(C)
    y = dataset.label_vector
    yC = y * C
    lower = np.minimum(0.0, yC)
    upper = np.maximum(0.0, yC)
    lower.setflags(write=False)
    upper.setflags(write=False)
    problem = TrainingProblem(dataset=dataset, kernel=kernel, C=C, lower=lower, upper=upper)
    if kernel.kind == "precomputed":
        problem._precomputed_ids  # validate ids eagerly
    return problem


class KernelCache:
    """LRU cache of whole Gram rows under a byte budget.

    The budget is floored to whole rows; at least two rows are kept even if
    the budget is smaller (a pair step reads two rows).  Rows are served
    read-only and are bit-identical whether cached or recomputed.
    """

    def __init__(self, capacity_bytes: int):
        if capacity_bytes < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity_bytes = int(capacity_bytes)
        self._rows: "OrderedDict[int, np.ndarray]" = OrderedDict()
        self._max_rows: Optional[int] = None
        self.hits = 0
        self.misses = 0
        self.evictions = 0
        self.kernel_evals = 0

    @classmethod
    def with_megabytes(cls, mb: float) -> "KernelCache":
        return cls(int(mb * (1 << 20)))

    def __len__(self) -> int:
        return len(self._rows)

    @property
    def max_rows(self) -> Optional[int]:
        return self._max_rows

    def stored_bytes(self) -> int:
        return sum(r.nbytes for r in self._rows.values())

    def clear(self) -> None:
        self._rows.clear()
        self._max_rows = None


def _compute_row(problem: TrainingProblem, i: int) -> np.ndarray:
    kind = problem.kernel.kind
    if kind == "precomputed":
        ids = problem._precomputed_ids
        row = np.array(problem.kernel.matrix[ids[i]][ids], dtype=np.float64)
    else:
        X = problem.dataset.feature_matrix
        prod = np.asarray((X @ X[i].T).toarray(), dtype=np.float64).ravel()
        if kind == "linear":
            row = prod
        else:
            sq = problem.dataset.squared_norms
            d2 = sq + sq[i] - 2.0 * prod
            np.maximum(d2, 0.0, out=d2)  # distances are nonnegative; clear rounding dust
            row = np.exp(-problem.kernel.gamma * d2)
    row.setflags(write=False)
    return row


def gram_row(cache: KernelCache, problem: TrainingProblem, i: int) -> np.ndarray:
    """Row i of the Gram matrix (0-based), via the cache.

    Serving from cache performs zero kernel evaluations; a miss computes the
    whole row, stores it, and evicts least-recently-used rows over budget.
    """
    l = len(problem)
    if not (0 <= i < l):
        raise IndexError(f"row index {i} outside 0..{l - 1}")
    rows = cache._rows
    row = rows.get(i)
    if row is not None:
        rows.move_to_end(i)
        cache.hits += 1
        return row
    row = _compute_row(problem, i)
    cache.misses += 1
    cache.kernel_evals += l
    if cache._max_rows is None:
        cache._max_rows = max(2, cache.capacity_bytes // max(row.nbytes, 1))
    rows[i] = row
    while len(rows) > cache._max_rows:
        rows.popitem(last=False)
        cache.evictions += 1
    return row


def objective(problem: TrainingProblem, alpha: np.ndarray, cache: Optional[KernelCache] = None) -> float:
    """f(alpha) = y . alpha - 0.5 * alpha' K alpha, recomputed from Gram rows."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (len(problem),):
        raise ValueError(f"alpha has shape {alpha.shape}, expected ({len(problem)},)")
    if cache is None:
        cache = KernelCache.with_megabytes(64)
    quad = 0.0
    for n in np.flatnonzero(alpha):
        quad += alpha[n] * float(gram_row(cache, problem, int(n)) @ alpha)
    return float(problem.y @ alpha - 0.5 * quad)

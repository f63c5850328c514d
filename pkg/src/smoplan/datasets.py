"""Dataset text format, the chessboard sampler, and seeded permutations."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .problem import Dataset


class ParseError(ValueError):
    """Malformed dataset text; the message carries the 1-based line number."""


def parse_libsvm(text: str) -> Dataset:
    """Parse `<label> <index>:<value> ...` lines into a dataset.

    Labels are +1, 1, or -1; feature indices are 1-based and strictly
    increasing within a line; blank lines are skipped; empty input gives the
    empty dataset.  Any malformed token raises ParseError with its line number.
    """
    points: list[tuple[tuple[int, float], ...]] = []
    labels: list[int] = []
    for ln, line in enumerate(text.splitlines(), start=1):
        toks = line.split()
        if not toks:
            continue
        lab = toks[0]
        if lab not in ("+1", "1", "-1"):
            raise ParseError(f"line {ln}: label {lab!r} is not one of +1, 1, -1")
        feats: list[tuple[int, float]] = []
        prev = 0
        for tok in toks[1:]:
            if "_" in tok:
                raise ParseError(f"line {ln}: token {tok!r} is not index:value")
            idx, sep, sval = tok.partition(":")
            if not sep or not sval:
                raise ParseError(f"line {ln}: token {tok!r} is not index:value")
            if not (idx.isascii() and idx.isdigit()):
                raise ParseError(f"line {ln}: index {idx!r} is not a positive integer")
            j = int(idx)
            if j < 1:
                raise ParseError(f"line {ln}: index {j} is not >= 1")
            if j <= prev:
                raise ParseError(f"line {ln}: indices must be strictly increasing, {j} after {prev}")
            try:
                v = float(sval)
            except ValueError:
                raise ParseError(f"line {ln}: value {sval!r} is not a number") from None
            if not math.isfinite(v):
                raise ParseError(f"line {ln}: value {sval!r} is not finite")
            feats.append((j, v))
            prev = j
        points.append(tuple(feats))
        labels.append(1 if lab in ("+1", "1") else -1)
    return Dataset(points=tuple(points), labels=tuple(labels))


def format_libsvm(dataset: Dataset) -> str:
    """Inverse of parse_libsvm; float values use shortest round-trip repr."""
    lines = []
    for p, lab in zip(dataset.points, dataset.labels):
        parts = ["+1" if lab == 1 else "-1"]
        parts.extend(f"{j}:{v!r}" for j, v in p)
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def load_libsvm(path) -> Dataset:
    return parse_libsvm(Path(path).read_text())


def gen_chessboard(n: int, seed: int) -> Dataset:
    """n points uniform on [0, 4)^2, labeled by unit-cell parity.

    The label is +1 when floor(x1) + floor(x2) is even, -1 otherwise: a 4x4
    board of alternating cells with balanced classes in expectation.  The
    same (n, seed) always yields the same dataset.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    xy = rng.random((n, 2)) * 4.0
    parity = np.floor(xy).astype(np.int64).sum(axis=1) % 2
    points = tuple(((1, float(a)), (2, float(b))) for a, b in xy)
    labels = tuple(1 if p == 0 else -1 for p in parity)
    return Dataset(points=points, labels=labels)


def permutation_indices(n: int, rng: np.random.Generator) -> list[int]:
    # explicit Fisher-Yates so the result is pinned to the PCG64 stream,
    # not to numpy's shuffle implementation
    idx = list(range(n))
    for k in range(n - 1, 0, -1):
        m = int(rng.integers(0, k + 1))
        idx[k], idx[m] = idx[m], idx[k]
    return idx


def permute(dataset: Dataset, seed) -> Dataset:
    """Seeded reordering of the dataset (PCG64 + Fisher-Yates).

    seed may be an int or a numpy SeedSequence; the same seed and dataset
    always produce the same ordering.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = permutation_indices(len(dataset), rng)
    return Dataset(points=tuple(dataset.points[k] for k in idx),
                   labels=tuple(dataset.labels[k] for k in idx))

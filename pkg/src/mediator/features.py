"""Standardization and polynomial feature maps shared by learners and Riesz fits."""

from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np


class Standardizer:
    """Column centering/scaling fitted on training rows; constant columns pass through centered."""

    def __init__(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        self.mean = x.mean(axis=0) if len(x) else np.zeros(x.shape[1])
        sd = x.std(axis=0) if len(x) else np.ones(x.shape[1])
        self.scale = np.where(sd > 1e-12, sd, 1.0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale


def binary_columns(x: np.ndarray) -> np.ndarray:
    """Mask of columns taking at most two distinct values."""
    x = np.asarray(x)
    return np.array([np.unique(x[:, j]).size <= 2 for j in range(x.shape[1])], dtype=bool)


def monomials(p: int, degree: int, binary: np.ndarray | None = None) -> list[tuple[int, ...]]:
    """Exponent index tuples of degree 1..degree, skipping powers of two-valued columns."""
    binary = np.zeros(p, dtype=bool) if binary is None else binary
    out = []
    for d in range(1, degree + 1):
        for combo in combinations_with_replacement(range(p), d):
            if any(binary[j] and combo.count(j) > 1 for j in set(combo)):
                continue
            out.append(combo)
    return out


def expand(x: np.ndarray, terms: list[tuple[int, ...]]) -> np.ndarray:
    """Evaluate monomial ``terms`` on the columns of ``x`` (no intercept column)."""
    x = np.asarray(x, dtype=float)
    if not terms:
        return np.empty((len(x), 0))
    cols = []
    for combo in terms:
        v = x[:, combo[0]].copy()
        for j in combo[1:]:
            v *= x[:, j]
        cols.append(v)
    return np.column_stack(cols)

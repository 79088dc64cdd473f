"""Rank pseudo-observations and Kendall's tau."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class PseudoSample:
    """An ``(n, 2)`` sample on the open unit square.

    ``atoms`` optionally flags rows lying exactly on the main diagonal, the
    singular component of the diagonal Marshall-Olkin copula.  Flags are
    metadata: they are never inferred from floating-point equality.
    """

    data: np.ndarray
    atoms: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[1] != 2:
            raise ValueError(f"expected an (n, 2) array, got shape {data.shape}")
        object.__setattr__(self, "data", data)
        if self.atoms is not None:
            atoms = np.asarray(self.atoms, dtype=bool)
            if atoms.shape != (data.shape[0],):
                raise ValueError("atoms must hold one flag per row")
            object.__setattr__(self, "atoms", atoms)

    def __len__(self):
        return self.data.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def take(self, rows) -> PseudoSample:
        atoms = None if self.atoms is None else self.atoms[rows]
        return PseudoSample(self.data[rows], atoms)


def as_array(s) -> np.ndarray:
    """Return the ``(n, 2)`` float array behind a sample-like object."""
    a = np.asarray(s.data if isinstance(s, PseudoSample) else s, dtype=float)
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array, got shape {a.shape}")
    return a


def atoms_of(s) -> np.ndarray | None:
    return s.atoms if isinstance(s, PseudoSample) else None


def pseudo_observations(raw, atoms=None) -> PseudoSample:
    """Column-wise ranks divided by ``n + 1``, ties receiving average ranks.

    Parameters
    ----------
    raw : array_like, shape (n, 2)
        Observations with continuous margins.  A :class:`PseudoSample` is
        accepted and its atom flags are carried over.
    atoms : array_like of bool, optional
        Per-row diagonal flags to attach to the output.
    """
    if isinstance(raw, PseudoSample) and atoms is None:
        atoms = raw.atoms
    x = as_array(raw)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    if not np.all(np.isfinite(x)):
        raise ValueError("observations must be finite")
    ranks = rankdata(x, method="average", axis=0)
    return PseudoSample(ranks / (n + 1.0), atoms)


@numba.njit(cache=True)
def _count_swaps(y):
    # Bottom-up merge sort of y; returns the number of inversions.
    n = y.shape[0]
    a = y.copy()
    buf = np.empty_like(a)
    swaps = 0
    width = 1
    while width < n:
        lo = 0
        while lo < n:
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            while i < mid:
                buf[k] = a[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = a[j]
                j += 1
                k += 1
            lo += 2 * width
        a, buf = buf, a
        width *= 2
    return swaps


@numba.njit(cache=True)
def _tied_pairs(sorted_vals):
    total = 0
    run = 1
    for i in range(1, sorted_vals.shape[0]):
        if sorted_vals[i] == sorted_vals[i - 1]:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    return total + run * (run - 1) // 2


@numba.njit(cache=True)
def _joint_tied_pairs(x, y):
    # x, y already sorted lexicographically by (x, y).
    total = 0
    run = 1
    for i in range(1, x.shape[0]):
        if x[i] == x[i - 1] and y[i] == y[i - 1]:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    return total + run * (run - 1) // 2


def kendall_tau(s) -> float:
    """Kendall's tau-b in ``O(n log n)`` by merge-sort inversion counting."""
    a = as_array(s)
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least two observations")
    order = np.lexsort((a[:, 1], a[:, 0]))
    x = np.ascontiguousarray(a[order, 0])
    y = np.ascontiguousarray(a[order, 1])
    n0 = n * (n - 1) // 2
    n1 = _tied_pairs(x)
    n3 = _joint_tied_pairs(x, y)
    swaps = _count_swaps(y)
    n2 = _tied_pairs(np.sort(y))
    denom = np.sqrt(float(n0 - n1) * float(n0 - n2))
    if denom == 0.0:
        return float("nan")
    return float((n0 - n1 - n2 + n3 - 2 * swaps) / denom)

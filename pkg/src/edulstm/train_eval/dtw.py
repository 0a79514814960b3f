"""Dynamic time warping with absolute-difference local cost."""

from __future__ import annotations

from functools import lru_cache
from itertools import product

import numpy as np


def dtw_distance(a, b) -> float:
    """Classical unconstrained DTW cost between two numeric sequences.

    ``D[i, j] = |a_i - b_j| + min(D[i-1, j], D[i, j-1], D[i-1, j-1])`` with the
    first row and column accumulated along the border; returns ``D[n-1, m-1]``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("dtw_distance expects 1-D sequences")
    if a.size == 0 or b.size == 0:
        raise ValueError("dtw_distance: empty sequence")
    n, m = a.size, b.size
    cost = np.abs(a[:, None] - b[None, :])
    D = np.empty((n, m))
    D[0, 0] = cost[0, 0]
    for i in range(1, n):
        D[i, 0] = D[i - 1, 0] + cost[i, 0]
    for j in range(1, m):
        D[0, j] = D[0, j - 1] + cost[0, j]
    for i in range(1, n):
        for j in range(1, m):
            D[i, j] = cost[i, j] + min(D[i - 1, j], D[i, j - 1], D[i - 1, j - 1])
    return float(D[n - 1, m - 1])


def dtw_many(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """DTW between every row of ``A`` (nA x n) and every row of ``B`` (nB x m).

    Same recurrence as :func:`dtw_distance`, vectorized over the pair grid.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    n, m = A.shape[1], B.shape[1]
    cost = np.abs(A[:, None, :, None] - B[None, :, None, :])
    D = np.empty_like(cost)
    D[..., 0, 0] = cost[..., 0, 0]
    for i in range(1, n):
        D[..., i, 0] = D[..., i - 1, 0] + cost[..., i, 0]
    for j in range(1, m):
        D[..., 0, j] = D[..., 0, j - 1] + cost[..., 0, j]
    for i in range(1, n):
        for j in range(1, m):
            best = np.minimum(np.minimum(D[..., i - 1, j], D[..., i, j - 1]), D[..., i - 1, j - 1])
            D[..., i, j] = cost[..., i, j] + best
    return D[..., n - 1, m - 1]


def binary_patterns(max_len: int) -> list[tuple[int, ...]]:
    """All 0/1 sequences of length 1..max_len, shortest first."""
    return [p for n in range(1, max_len + 1) for p in product((0, 1), repeat=n)]


@lru_cache(maxsize=8)
def binary_pattern_distances(max_len: int) -> tuple[dict[tuple[int, ...], int], np.ndarray]:
    """Index of every binary pattern up to ``max_len`` and their DTW distance matrix."""
    pats = binary_patterns(max_len)
    index = {p: j for j, p in enumerate(pats)}
    D = np.empty((len(pats), len(pats)))
    groups = {n: [j for j, p in enumerate(pats) if len(p) == n] for n in range(1, max_len + 1)}
    for la, ia in groups.items():
        A = np.array([pats[j] for j in ia])
        for lb, ib in groups.items():
            B = np.array([pats[j] for j in ib])
            D[np.ix_(ia, ib)] = dtw_many(A, B)
    D.setflags(write=False)
    return index, D

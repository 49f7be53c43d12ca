"""Pure-numpy kernel implementations (fallback backend).

Each function here has a numba twin in ``_numba``; both consume the same
precomputed float64 inputs and must produce bit-identical outputs, so the
only arithmetic performed inside a kernel is comparison, max, and the
shared scoring expressions.
"""

from __future__ import annotations

import numpy as np


def complete_linkage_merge(dist: np.ndarray, threshold: float) -> np.ndarray:
    """Greedy complete-linkage merging over a precomputed distance matrix.

    Repeatedly merges the globally closest active pair while its linkage
    distance is strictly below ``threshold``. Ties pick the lexicographically
    smallest (i, j) slot pair; slot index always equals the smallest member
    index of its cluster, because merges fold the larger slot into the
    smaller. Returns a parent array (parent[j] = slot j was folded into).
    """
    n = dist.shape[0]
    parent = np.arange(n, dtype=np.int64)
    if n < 2:
        return parent
    work = dist.astype(np.float64, copy=True)
    np.fill_diagonal(work, np.inf)
    while True:
        flat = int(np.argmin(work))
        i, j = divmod(flat, n)
        if not work[i, j] < threshold:
            break
        # symmetric matrix: first flat occurrence always has i < j
        row = np.maximum(work[i], work[j])
        work[i, :] = row
        work[:, i] = row
        work[i, i] = np.inf
        work[j, :] = np.inf
        work[:, j] = np.inf
        parent[j] = i
    return parent


def assign_nearest(gram: np.ndarray, c_sqnorm: np.ndarray) -> np.ndarray:
    """Nearest-centroid labels from gram = X @ C.T and squared centroid norms.

    argmin_j of c_sqnorm[j] - 2*gram[i, j]; the constant |x|^2 term is
    dropped since it does not affect the argmin. First minimum wins.
    """
    return np.argmin(c_sqnorm[None, :] - 2.0 * gram, axis=1).astype(np.int64)


def mmr_order(rel: np.ndarray, sim: np.ndarray, lam: float, limit: int) -> np.ndarray:
    """Greedy maximal-marginal-relevance pick order.

    First pick is pure relevance; afterwards score = lam*rel - (1-lam)*max
    similarity to anything already selected. First maximum wins, so callers
    get smallest-index tie-breaking.
    """
    n = rel.shape[0]
    limit = min(limit, n)
    if limit <= 0:
        return np.empty(0, dtype=np.int64)
    one_m = 1.0 - lam
    picked = np.empty(limit, dtype=np.int64)
    used = np.zeros(n, dtype=bool)
    first = int(np.argmax(rel))
    picked[0] = first
    used[first] = True
    best = sim[:, first].copy()
    for t in range(1, limit):
        score = lam * rel - one_m * best
        score[used] = -np.inf
        c = int(np.argmax(score))
        picked[t] = c
        used[c] = True
        best = np.maximum(best, sim[:, c])
    return picked

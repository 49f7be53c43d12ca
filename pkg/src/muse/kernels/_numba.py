"""Numba-jitted kernels; see _numpy for the reference semantics."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def complete_linkage_merge(dist: np.ndarray, threshold: float) -> np.ndarray:
    n = dist.shape[0]
    parent = np.arange(n)
    if n < 2:
        return parent
    work = dist.copy()
    active = np.ones(n, dtype=np.bool_)
    while True:
        best = np.inf
        bi = -1
        bj = -1
        for i in range(n):
            if not active[i]:
                continue
            for j in range(i + 1, n):
                if active[j] and work[i, j] < best:
                    best = work[i, j]
                    bi = i
                    bj = j
        if bi < 0 or not best < threshold:
            break
        for k in range(n):
            if active[k] and k != bi and k != bj:
                a = work[bi, k]
                b = work[bj, k]
                m = a if a >= b else b
                work[bi, k] = m
                work[k, bi] = m
        active[bj] = False
        parent[bj] = bi
    return parent


@njit(cache=True)
def assign_nearest(gram: np.ndarray, c_sqnorm: np.ndarray) -> np.ndarray:
    n, k = gram.shape
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = np.inf
        arg = 0
        for j in range(k):
            s = c_sqnorm[j] - 2.0 * gram[i, j]
            if s < best:
                best = s
                arg = j
        labels[i] = arg
    return labels


@njit(cache=True)
def mmr_order(rel: np.ndarray, sim: np.ndarray, lam: float, limit: int) -> np.ndarray:
    n = rel.shape[0]
    if limit > n:
        limit = n
    if limit <= 0:
        return np.empty(0, dtype=np.int64)
    one_m = 1.0 - lam
    picked = np.empty(limit, dtype=np.int64)
    used = np.zeros(n, dtype=np.bool_)
    first = 0
    top = -np.inf
    for i in range(n):
        if rel[i] > top:
            top = rel[i]
            first = i
    picked[0] = first
    used[first] = True
    best = sim[:, first].copy()
    for t in range(1, limit):
        c = -1
        top = -np.inf
        for i in range(n):
            if used[i]:
                continue
            score = lam * rel[i] - one_m * best[i]
            if score > top:
                top = score
                c = i
        picked[t] = c
        used[c] = True
        for i in range(n):
            if sim[i, c] > best[i]:
                best[i] = sim[i, c]
    return picked

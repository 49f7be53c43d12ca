"""Two-stage clustering of purpose tags, solution-cluster induction, and
external clustering metrics.

Purpose tags are first split into loose chunks with K-means, then each
chunk is refined by complete-linkage agglomerative clustering under a
strict cosine-distance threshold. Solution clusters are not clustered on
their own text at all; they are induced from the problem clusters through
shared documents.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import KTooLarge, UniverseMismatch
from .ids import stable_id

DEFAULT_DISTANCE_THRESHOLD = 0.2
LOOSE_CHUNK_TARGET = 50  # tags per loose cluster when k is unset


@dataclass(frozen=True)
class LooseCluster:
    id: int
    members: tuple[str, ...]  # tag ids, input order


@dataclass(frozen=True)
class ProblemCluster:
    id: str
    members: tuple[str, ...]  # purpose tag ids, input order
    loose_cluster_id: int


@dataclass(frozen=True)
class SolutionCluster:
    id: str
    members: tuple[str, ...]  # mechanism tag ids, sorted


# ---------------------------------------------------------------------------
# k-means (loose chunking)


def _sq_dist_to(x: np.ndarray, center: np.ndarray) -> np.ndarray:
    d = x - center[None, :]
    return np.einsum("ij,ij->i", d, d)


def _kmeans_pp_centers(x: np.ndarray, k: int,
                       rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = _sq_dist_to(x, x[chosen[0]])
    for c in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # all remaining points coincide with a center; take the first
            # index not already chosen
            taken = set(chosen[:c].tolist())
            nxt = next(i for i in range(n) if i not in taken)
        else:
            r = rng.random() * total
            nxt = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            nxt = min(nxt, n - 1)
        chosen[c] = nxt
        d2 = np.minimum(d2, _sq_dist_to(x, x[nxt]))
    return x[chosen].copy()


def _repair_empty(labels: np.ndarray, x: np.ndarray, centers: np.ndarray,
                  k: int) -> np.ndarray:
    """Reseed each empty cluster with the farthest point of the largest one."""
    for j in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[j] > 0:
            continue
        big = int(np.argmax(counts))
        members = np.flatnonzero(labels == big)
        far = members[int(np.argmax(_sq_dist_to(x[members], centers[big])))]
        labels[far] = j
        centers[j] = x[far]
    return labels


def kmeans(vectors: np.ndarray, k: int, seed: int = 0,
           max_iter: int = 100) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; returns per-row labels.

    Deterministic for fixed inputs and seed: assignment ties take the first
    centroid, empty clusters are reseeded by splitting the largest cluster,
    and iteration stops at an assignment fixpoint or max_iter.
    """
    x = np.ascontiguousarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if k > n:
        raise KTooLarge(f"k={k} exceeds {n} vectors")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_centers(x, k, rng)
    prev = None
    for _ in range(max_iter):
        gram = x @ centers.T
        c2 = np.einsum("ij,ij->i", centers, centers)
        labels = kernels.assign_nearest(gram, c2)
        labels = _repair_empty(labels, x, centers, k)
        if prev is not None and np.array_equal(labels, prev):
            break
        prev = labels
        sums = np.zeros((k, x.shape[1]), dtype=np.float64)
        np.add.at(sums, labels, x)
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        centers = sums / counts[:, None]
    return prev if prev is not None else labels


# ---------------------------------------------------------------------------
# agglomerative refinement


def agglomerative(vectors: np.ndarray,
                  distance_threshold: float) -> list[list[int]]:
    """Complete-linkage clustering under cosine distance (1 - cosine).

    Merges the globally closest pair while its complete-linkage distance is
    strictly below the threshold; ties take the lexicographically smallest
    pair of cluster ids, a cluster's id being its smallest member index.
    Returns member-index lists, each ascending, ordered by first member.
    """
    if not 0.0 < distance_threshold <= 2.0:
        raise ValueError("distance_threshold must be in (0, 2]")
    x = np.ascontiguousarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        return []
    dist = 1.0 - x @ x.T
    parent = kernels.complete_linkage_merge(dist, distance_threshold)
    labels = kernels.resolve_labels(parent)
    groups: dict[int, list[int]] = defaultdict(list)
    for i, lab in enumerate(labels):
        groups[int(lab)].append(i)
    return [groups[lab] for lab in sorted(groups)]


def build_problem_clusters(
    tags: list,  # PurposeTag sequence
    emb,
    k_loose: int | None = None,
    threshold: float = DEFAULT_DISTANCE_THRESHOLD,
    seed: int = 0,
) -> tuple[list[LooseCluster], list[ProblemCluster]]:
    """Loose K-means split followed by per-chunk agglomerative refinement."""
    if not tags:
        raise ValueError("no tags to cluster")
    if k_loose is None:
        k_loose = max(1, len(tags) // LOOSE_CHUNK_TARGET)
    vecs = emb.embed([t.text for t in tags])
    labels = kmeans(vecs, k_loose, seed=seed)

    loose: list[LooseCluster] = []
    problems: list[ProblemCluster] = []
    for lc in range(k_loose):
        pos = [i for i in range(len(tags)) if labels[i] == lc]
        loose.append(LooseCluster(id=lc, members=tuple(tags[i].id for i in pos)))
        if not pos:
            continue
        for group in agglomerative(vecs[pos], threshold):
            member_tags = [tags[pos[g]] for g in group]
            cid = stable_id("problem-cluster",
                            *sorted(t.member_key() for t in member_tags))
            problems.append(ProblemCluster(
                id=cid, members=tuple(t.id for t in member_tags),
                loose_cluster_id=lc))
    return loose, problems


# ---------------------------------------------------------------------------
# solution induction


class _UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the smaller root for deterministic components
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def induce_solution_clusters(problems: list[ProblemCluster],
                             purpose_tags: list,
                             mechanism_tags: list) -> list[SolutionCluster]:
    """Partition mechanism tags through shared problem clusters.

    Two mechanism tags land together when their documents own purpose tags
    from one problem cluster; the pairwise rule is closed transitively so
    the result is a partition. Mechanism tags of documents with no
    clustered purpose tag stay singletons.
    """
    purpose_doc = {t.id: t.doc_id for t in purpose_tags}
    doc_to_clusters: dict[str, set[str]] = defaultdict(set)
    for pc in problems:
        for tag_id in pc.members:
            doc_to_clusters[purpose_doc[tag_id]].add(pc.id)

    uf = _UnionFind([t.id for t in mechanism_tags])
    cluster_docs: dict[str, list] = defaultdict(list)
    for t in mechanism_tags:
        for pc_id in doc_to_clusters.get(t.doc_id, ()):
            cluster_docs[pc_id].append(t.id)
    for tag_ids in cluster_docs.values():
        for other in tag_ids[1:]:
            uf.union(tag_ids[0], other)

    comps: dict[str, list[str]] = defaultdict(list)
    for t in mechanism_tags:
        comps[uf.find(t.id)].append(t.id)

    key_by_id = {t.id: t.member_key() for t in mechanism_tags}
    out = []
    for root in sorted(comps):
        members = tuple(sorted(comps[root]))
        cid = stable_id("solution-cluster",
                        *sorted(key_by_id[m] for m in members))
        out.append(SolutionCluster(id=cid, members=members))
    return out


# ---------------------------------------------------------------------------
# external metrics


def _check_partitions(pred, gold) -> tuple[list[set], list[set], int]:
    p = [set(c) for c in pred]
    g = [set(c) for c in gold]
    pu = [e for c in pred for e in c]
    gu = [e for c in gold for e in c]
    if len(pu) != len(set(pu)) or len(gu) != len(set(gu)):
        raise ValueError("partitions must not repeat elements")
    if set(pu) != set(gu):
        raise UniverseMismatch("pred and gold cover different elements")
    return p, g, len(pu)


def purity(pred, gold) -> float:
    """Fraction of elements captured by each predicted cluster's best match."""
    p, g, n = _check_partitions(pred, gold)
    if n == 0:
        raise ValueError("empty partitions")
    return sum(max(len(c & cls) for cls in g) for c in p) / n


def nmi(pred, gold) -> float:
    """Mutual information over the arithmetic mean of entropies (natural log)."""
    p, g, n = _check_partitions(pred, gold)
    if n == 0:
        raise ValueError("empty partitions")
    hp = -sum((len(c) / n) * math.log(len(c) / n) for c in p if c)
    hg = -sum((len(c) / n) * math.log(len(c) / n) for c in g if c)
    if hp == 0.0 and hg == 0.0:
        return 1.0
    mi = 0.0
    for c in p:
        for cls in g:
            nij = len(c & cls)
            if nij:
                mi += (nij / n) * math.log(n * nij / (len(c) * len(cls)))
    return mi / ((hp + hg) / 2.0)


# ---------------------------------------------------------------------------
# persistence


def save_clusters(loose: list[LooseCluster], problems: list[ProblemCluster],
                  solutions: list[SolutionCluster], path: str | Path) -> None:
    doc = {
        "loose_clusters": [
            {"id": c.id, "members": sorted(c.members)} for c in loose],
        "problem_clusters": [
            {"id": c.id, "loose_cluster_id": c.loose_cluster_id,
             "members": sorted(c.members)}
            for c in sorted(problems, key=lambda c: c.id)],
        "solution_clusters": [
            {"id": c.id, "members": sorted(c.members)}
            for c in sorted(solutions, key=lambda c: c.id)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_clusters(path: str | Path) -> tuple[list[LooseCluster],
                                             list[ProblemCluster],
                                             list[SolutionCluster]]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    loose = [LooseCluster(id=c["id"], members=tuple(c["members"]))
             for c in doc["loose_clusters"]]
    problems = [ProblemCluster(id=c["id"], members=tuple(c["members"]),
                               loose_cluster_id=c["loose_cluster_id"])
                for c in doc["problem_clusters"]]
    solutions = [SolutionCluster(id=c["id"], members=tuple(c["members"]))
                 for c in doc["solution_clusters"]]
    return loose, problems, solutions

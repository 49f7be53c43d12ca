"""Cosine geometry and the exact nearest-neighbour index.

All vectors are unit-normalized at ingestion so cosine similarity is a
plain inner product. The index is an exact scan: at desk scale (well under
10^5 entries) a matrix-vector product beats any approximate structure and
keeps results reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptFile, DimMismatch, DuplicateId, VersionMismatch

INDEX_FORMAT_VERSION = 1


def unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("cannot normalize the zero vector")
    return v / n


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimMismatch(f"{a.shape} vs {b.shape}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


@dataclass
class NnIndex:
    ids: list[str]
    matrix: np.ndarray  # (n, dim), unit rows

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)


def build_index(items: list[tuple[str, np.ndarray]]) -> NnIndex:
    if not items:
        raise ValueError("cannot build an empty index")
    dim = items[0][1].shape[0]
    seen: set[str] = set()
    rows = []
    for item_id, vec in items:
        if item_id in seen:
            raise DuplicateId(item_id)
        seen.add(item_id)
        if vec.shape != (dim,):
            raise DimMismatch(f"entry {item_id}: {vec.shape} vs ({dim},)")
        rows.append(vec)
    matrix = np.ascontiguousarray(np.stack(rows), dtype=np.float64)
    return NnIndex(ids=[i for i, _ in items], matrix=matrix)


def nearest(index: NnIndex, query: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Top-k entries by cosine, descending; ties broken by ascending id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if query.shape != (index.dim,):
        raise DimMismatch(f"query {query.shape} vs index dim {index.dim}")
    scores = index.matrix @ query
    order = sorted(range(len(index.ids)),
                   key=lambda i: (-scores[i], index.ids[i]))
    return [(index.ids[i], float(np.clip(scores[i], -1.0, 1.0)))
            for i in order[:k]]


def save_index(index: NnIndex, path: str | Path) -> None:
    doc = {
        "version": INDEX_FORMAT_VERSION,
        "dim": index.dim,
        "entries": [{"id": i, "vector": v.tolist()}
                    for i, v in zip(index.ids, index.matrix)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_index(path: str | Path) -> NnIndex:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorruptFile(f"{path}: {e}") from e
    if not isinstance(doc, dict) or "version" not in doc:
        raise CorruptFile(f"{path}: missing version")
    if doc["version"] != INDEX_FORMAT_VERSION:
        raise VersionMismatch(f"{path}: version {doc['version']}")
    try:
        items = [(e["id"], np.asarray(e["vector"], dtype=np.float64))
                 for e in doc["entries"]]
    except (KeyError, TypeError) as e:
        raise CorruptFile(f"{path}: bad entry ({e})") from e
    return build_index(items)

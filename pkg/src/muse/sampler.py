"""Inspiration sampling: anchor lookup, v-structure path enumeration,
source classification, MMR diversification, and display rendering.

A query problem is anchored to its nearest problem node, then every simple
"up, down" and "up, up, down" walk over abstraction edges is enumerated.
Endpoint problems are bucketed by (path shape, edge provenance) and each
bucket is capped with maximal marginal relevance, trading query relevance
against redundancy among the picks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .errors import NoAnchor, ProviderError
from .graphcore import ABSTRACTION_KINDS, EdgeKind, Fcg, NodeKind
from .providers import FAKE_COMPLETION_MARKER
from .vectors import NnIndex, nearest

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 0.7
DEFAULT_PER_BUCKET = 5
MAX_MECHANISMS = 3


class PathShape(str, Enum):
    UP_DOWN = "up-down"
    UP_UP_DOWN = "up-up-down"


class SourceClass(str, Enum):
    NLI = "nli"
    LLM = "llm"
    VERB = "verb"


class Condition(str, Enum):
    PURPOSE = "purpose"
    PURPOSE_MECHANISM = "purpose-mech"
    PURPOSE_MECHANISM_SENTENCE = "purpose-mech-sentence"


BUCKET_ORDER = [(shape, source)
                for shape in (PathShape.UP_DOWN, PathShape.UP_UP_DOWN)
                for source in (SourceClass.NLI, SourceClass.LLM,
                               SourceClass.VERB)]


@dataclass(frozen=True)
class PathStep:
    src: str
    dst: str
    kind: EdgeKind
    direction: str  # "up" follows the edge, "down" runs against it


@dataclass(frozen=True)
class InspirationPath:
    anchor: str
    steps: tuple[PathStep, ...]
    endpoint: str
    shape: PathShape


@dataclass(frozen=True)
class Inspiration:
    purpose: str
    mechanisms: tuple[str, ...]
    path: InspirationPath
    source: SourceClass


def find_anchor(problem_text: str, emb, index: NnIndex) -> str:
    """Nearest problem node to the query text (the index holds only
    problem nodes)."""
    if len(index) == 0:
        raise NoAnchor("empty index")
    query = emb.embed([problem_text])[0]
    return nearest(index, query, 1)[0][0]


# ---------------------------------------------------------------------------
# path enumeration


def _direction_maps(fcg: Fcg):
    up: dict[str, list[tuple[str, EdgeKind]]] = {}
    down: dict[str, list[tuple[str, EdgeKind]]] = {}
    for e in fcg.edges:
        if e.kind in ABSTRACTION_KINDS:
            up.setdefault(e.src, []).append((e.dst, e.kind))
            down.setdefault(e.dst, []).append((e.src, e.kind))
    for m in (up, down):
        for k in m:
            m[k].sort()
    return up, down


def enumerate_paths(fcg: Fcg, anchor: str,
                    shapes: frozenset[PathShape] = frozenset(PathShape),
                    ) -> list[InspirationPath]:
    """All simple v-structure walks from the anchor.

    Intermediate nodes may be virtual; endpoints must be problem nodes and
    differ from the anchor. Enumeration order is deterministic (sorted
    neighbour lists).
    """
    if anchor not in fcg.nodes:
        raise ValueError(f"unknown anchor {anchor}")
    up, down = _direction_maps(fcg)
    out: list[InspirationPath] = []

    def is_problem(nid: str) -> bool:
        return fcg.nodes[nid].kind is NodeKind.PROBLEM

    if PathShape.UP_DOWN in shapes:
        for p, k1 in up.get(anchor, ()):
            for e, k2 in down.get(p, ()):
                if e == anchor or e == p or not is_problem(e):
                    continue
                out.append(InspirationPath(
                    anchor=anchor,
                    steps=(PathStep(anchor, p, k1, "up"),
                           PathStep(e, p, k2, "down")),
                    endpoint=e, shape=PathShape.UP_DOWN))
    if PathShape.UP_UP_DOWN in shapes:
        for p1, k1 in up.get(anchor, ()):
            for p2, k2 in up.get(p1, ()):
                if p2 == anchor:
                    continue
                for e, k3 in down.get(p2, ()):
                    if e in (anchor, p1, p2) or not is_problem(e):
                        continue
                    out.append(InspirationPath(
                        anchor=anchor,
                        steps=(PathStep(anchor, p1, k1, "up"),
                               PathStep(p1, p2, k2, "up"),
                               PathStep(e, p2, k3, "down")),
                        endpoint=e, shape=PathShape.UP_UP_DOWN))
    return out


def classify_source(path: InspirationPath) -> SourceClass:
    """Provenance of a path: verb beats LLM beats NLI.

    A single loose link dominates how far the analogy reaches, so the
    weakest edge kind on the path names the whole path.
    """
    kinds = {s.kind for s in path.steps}
    if EdgeKind.ABSTRACTION_VERB in kinds:
        return SourceClass.VERB
    if EdgeKind.ABSTRACTION_LLM in kinds:
        return SourceClass.LLM
    return SourceClass.NLI


# ---------------------------------------------------------------------------
# MMR


def mmr_select(candidates: list[tuple[str, np.ndarray]], query: np.ndarray,
               lam: float = DEFAULT_LAMBDA, limit: int = DEFAULT_PER_BUCKET,
               ) -> list[str]:
    """Greedy maximal-marginal-relevance selection, ids in pick order.

    score(c) = lam*cos(query, c) - (1-lam)*max cos(c, already picked); the
    first pick is pure relevance. Ties take the smallest id.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0,1]")
    if not candidates:
        return []
    ordered = sorted(candidates, key=lambda c: c[0])
    mat = np.ascontiguousarray(np.stack([v for _, v in ordered]),
                               dtype=np.float64)
    rel = mat @ np.asarray(query, dtype=np.float64)
    sim = mat @ mat.T
    picks = kernels.mmr_order(rel, sim, float(lam), int(limit))
    return [ordered[i][0] for i in picks]


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class SamplerConfig:
    lam: float = DEFAULT_LAMBDA
    per_bucket: int = DEFAULT_PER_BUCKET
    shapes: frozenset[PathShape] = frozenset(PathShape)


def _solution_neighbours(fcg: Fcg, problem_id: str) -> list[str]:
    return sorted(e.dst for e in fcg.edges
                  if e.kind is EdgeKind.PROBLEM_SOLUTION
                  and e.src == problem_id)


def _rank_mechanisms(fcg: Fcg, endpoint: str, emb) -> tuple[str, ...]:
    sols = _solution_neighbours(fcg, endpoint)
    if not sols:
        return ()
    labels = [fcg.nodes[s].label for s in sols]
    vecs = emb.embed([fcg.nodes[endpoint].label] + labels)
    sims = vecs[1:] @ vecs[0]
    order = sorted(range(len(sols)), key=lambda i: (-sims[i], sols[i]))
    return tuple(fcg.nodes[sols[i]].label for i in order[:MAX_MECHANISMS])


def sample_inspirations(fcg: Fcg, index: NnIndex, problem_text: str, emb,
                        cfg: SamplerConfig | None = None) -> list[Inspiration]:
    """Anchor, enumerate, bucket by (shape, source), cap each bucket by MMR.

    Within a bucket duplicate endpoints collapse to their first enumerated
    path (relevance is a function of the endpoint alone, so later paths
    cannot beat it). Output: fixed bucket order, MMR pick order inside.
    """
    cfg = cfg or SamplerConfig()
    anchor = find_anchor(problem_text, emb, index)
    query = emb.embed([problem_text])[0]
    paths = enumerate_paths(fcg, anchor, cfg.shapes)

    buckets: dict[tuple[PathShape, SourceClass], dict[str, InspirationPath]] = {}
    for p in paths:
        key = (p.shape, classify_source(p))
        buckets.setdefault(key, {}).setdefault(p.endpoint, p)

    out: list[Inspiration] = []
    for key in BUCKET_ORDER:
        endpoint_paths = buckets.get(key)
        if not endpoint_paths:
            continue
        ids = sorted(endpoint_paths)
        vecs = emb.embed([fcg.nodes[e].label for e in ids])
        chosen = mmr_select(list(zip(ids, vecs)), query, lam=cfg.lam,
                            limit=cfg.per_bucket)
        for endpoint in chosen:
            path = endpoint_paths[endpoint]
            out.append(Inspiration(
                purpose=fcg.nodes[endpoint].label,
                mechanisms=_rank_mechanisms(fcg, endpoint, emb),
                path=path,
                source=key[1]))
    return out


# ---------------------------------------------------------------------------
# rendering


def sentence_prompt(purpose: str, mechanism: str) -> str:
    return ("Combine this purpose and mechanism into one short sentence.\n\n"
            f"{purpose} using {mechanism}\n"
            "Rewrite the line above as one fluent sentence.")


def _strip_marker(text: str) -> str:
    text = text.strip()
    if text.startswith(FAKE_COMPLETION_MARKER):
        text = text[len(FAKE_COMPLETION_MARKER):].strip()
    return text


def render(inspiration: Inspiration, condition: Condition, llm=None) -> dict:
    """Display item for one inspiration under a display condition.

    The sentence condition asks the completion provider for one sentence
    per mechanism; on provider failure the item degrades to the
    purpose+mechanism form and says so.
    """
    item: dict = {"purpose": inspiration.purpose}
    if condition is Condition.PURPOSE:
        return item
    item["mechanisms"] = list(inspiration.mechanisms)
    if condition is Condition.PURPOSE_MECHANISM:
        return item
    if llm is None:
        raise ValueError("sentence condition needs a completion provider")
    sentences = []
    try:
        for mech in inspiration.mechanisms:
            sentences.append(_strip_marker(
                llm.complete(sentence_prompt(inspiration.purpose, mech))))
    except ProviderError as e:
        log.warning("sentence rendering failed (%s); degrading", e)
        item["degraded"] = True
        return item
    item["sentences"] = sentences
    return item


def path_to_dict(path: InspirationPath) -> dict:
    return {
        "anchor": path.anchor,
        "endpoint": path.endpoint,
        "shape": path.shape.value,
        "steps": [{"src": s.src, "dst": s.dst, "kind": s.kind.value,
                   "direction": s.direction} for s in path.steps],
    }


def inspiration_to_dict(inspiration: Inspiration, condition: Condition,
                        llm=None) -> dict:
    item = render(inspiration, condition, llm)
    item["source"] = inspiration.source.value
    item["path"] = path_to_dict(inspiration.path)
    return item

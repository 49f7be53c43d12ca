"""The functional concept graph: node/edge model and structural operations.

Abstraction edges point from the specific problem to the more general one,
so walking "up" the hierarchy follows edge direction. After assembly the
abstraction subgraph is made acyclic (entailment scoring is noisy and can
produce cycles) and transitively reduced (shortcut edges add nothing the
longer path does not already say).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import CorruptFile, CyclicInput, VersionMismatch
from .ids import stable_id

GRAPH_FORMAT_VERSION = 1

DEFAULT_ENTAILMENT_THRESHOLD = 0.5
DEFAULT_ENTAILMENT_PREFIX = "I want"


class NodeKind(str, Enum):
    PROBLEM = "problem"
    SOLUTION = "solution"
    VIRTUAL_LLM = "virtual-llm"
    VIRTUAL_VERB = "virtual-verb"


class EdgeKind(str, Enum):
    ABSTRACTION_NLI = "abstraction-nli"
    ABSTRACTION_LLM = "abstraction-llm"
    ABSTRACTION_VERB = "abstraction-verb"
    PROBLEM_SOLUTION = "problem-solution"


ABSTRACTION_KINDS = frozenset({EdgeKind.ABSTRACTION_NLI,
                               EdgeKind.ABSTRACTION_LLM,
                               EdgeKind.ABSTRACTION_VERB})

PROBLEMISH_KINDS = frozenset({NodeKind.PROBLEM, NodeKind.VIRTUAL_LLM,
                              NodeKind.VIRTUAL_VERB})


@dataclass(frozen=True)
class FcgNode:
    id: str
    kind: NodeKind
    label: str
    members: tuple[str, ...] = ()
    loose_cluster_id: int | None = None


@dataclass(frozen=True)
class FcgEdge:
    src: str
    dst: str
    kind: EdgeKind
    score: float | None = None
    witness: tuple[str, ...] = ()  # document ids backing a problem-solution edge

    def sort_key(self):
        return (self.src, self.dst, self.kind.value)


@dataclass
class Fcg:
    nodes: dict[str, FcgNode] = field(default_factory=dict)
    edges: list[FcgEdge] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def add_node(self, node: FcgNode) -> None:
        existing = self.nodes.get(node.id)
        if existing is not None and existing != node:
            raise ValueError(f"conflicting node for id {node.id}")
        self.nodes[node.id] = node

    def add_edge(self, edge: FcgEdge) -> bool:
        """Insert unless a (src, dst, kind) duplicate exists; returns True
        when added."""
        for n in (edge.src, edge.dst):
            if n not in self.nodes:
                raise ValueError(f"edge references unknown node {n}")
        src, dst = self.nodes[edge.src], self.nodes[edge.dst]
        if edge.kind is EdgeKind.PROBLEM_SOLUTION:
            if src.kind is not NodeKind.PROBLEM or dst.kind is not NodeKind.SOLUTION:
                raise ValueError("problem-solution edges must run problem -> solution")
        else:
            if src.kind not in PROBLEMISH_KINDS or dst.kind not in PROBLEMISH_KINDS:
                raise ValueError("abstraction edges only connect problem/virtual nodes")
        if any(e.src == edge.src and e.dst == edge.dst and e.kind == edge.kind
               for e in self.edges):
            return False
        self.edges.append(edge)
        return True

    def abstraction_edges(self) -> list[FcgEdge]:
        return [e for e in self.edges if e.kind in ABSTRACTION_KINDS]

    def copy(self) -> "Fcg":
        return Fcg(nodes=dict(self.nodes), edges=list(self.edges),
                   params=dict(self.params))

    def sorted_edges(self) -> list[FcgEdge]:
        return sorted(self.edges, key=FcgEdge.sort_key)

    def equivalent(self, other: "Fcg") -> bool:
        return (self.nodes == other.nodes
                and self.sorted_edges() == other.sorted_edges()
                and self.params == other.params)


def node_id(kind: NodeKind, label: str, member_keys=()) -> str:
    return stable_id("node", kind.value, label, *sorted(member_keys))


# ---------------------------------------------------------------------------
# representatives


def representative(member_ids, texts_by_id, emb, policy: str = "medoid",
                   seed: int = 0) -> str:
    """Pick the cluster's canonical text.

    medoid (default): member with the highest mean cosine to its co-members,
    ties to the smallest tag id. seeded-random: reproducible uniform choice.
    """
    ordered = sorted(member_ids)
    if not ordered:
        raise ValueError("empty cluster")
    if policy == "seeded-random":
        rng = random.Random(f"{seed}:{'|'.join(ordered)}")
        return texts_by_id[ordered[rng.randrange(len(ordered))]]
    if policy != "medoid":
        raise ValueError(f"unknown representative policy {policy!r}")
    if len(ordered) == 1:
        return texts_by_id[ordered[0]]
    vecs = emb.embed([texts_by_id[t] for t in ordered])
    sims = vecs @ vecs.T
    means = (sims.sum(axis=1) - sims.diagonal()) / (len(ordered) - 1)
    best = 0
    for i in range(1, len(ordered)):
        if means[i] > means[best]:
            best = i
    return texts_by_id[ordered[best]]


# ---------------------------------------------------------------------------
# edge construction


def nli_abstraction_edges(reps: list[tuple[str, str]], ent,
                          t: float = DEFAULT_ENTAILMENT_THRESHOLD,
                          prefix: str = DEFAULT_ENTAILMENT_PREFIX,
                          ) -> list[FcgEdge]:
    """Entailment-scored abstraction edges over all ordered rep pairs.

    ``reps`` maps node id -> representative text. An edge u -> v (v is the
    abstraction) appears when scoring "<prefix> rep(u)" against
    "<prefix> rep(v)" reaches the threshold.
    """
    if not 0.0 < t <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    edges = []
    for u_id, u_text in reps:
        for v_id, v_text in reps:
            if u_id == v_id:
                continue
            s = ent.score(f"{prefix} {u_text}", f"{prefix} {v_text}")
            if s >= t:
                edges.append(FcgEdge(src=u_id, dst=v_id,
                                     kind=EdgeKind.ABSTRACTION_NLI, score=s))
    return edges


def problem_solution_edges(problem_members: list[tuple[str, tuple[str, ...]]],
                           solution_members: list[tuple[str, tuple[str, ...]]],
                           purpose_doc: dict[str, str],
                           mechanism_doc: dict[str, str]) -> list[FcgEdge]:
    """One edge per (problem node, solution node) pair sharing a document.

    The sharing documents are kept on the edge as its witness list.
    """
    doc_problems: dict[str, set[str]] = {}
    for node, tag_ids in problem_members:
        for t in tag_ids:
            doc_problems.setdefault(purpose_doc[t], set()).add(node)
    doc_solutions: dict[str, set[str]] = {}
    for node, tag_ids in solution_members:
        for t in tag_ids:
            doc_solutions.setdefault(mechanism_doc[t], set()).add(node)

    witness: dict[tuple[str, str], set[str]] = {}
    for doc, probs in doc_problems.items():
        sols = doc_solutions.get(doc)
        if not sols:
            continue
        for p in probs:
            for s in sols:
                witness.setdefault((p, s), set()).add(doc)
    return [FcgEdge(src=p, dst=s, kind=EdgeKind.PROBLEM_SOLUTION,
                    witness=tuple(sorted(docs)))
            for (p, s), docs in sorted(witness.items())]


# ---------------------------------------------------------------------------
# cycle removal and redundancy elimination


def _abs_adjacency(edges: list[FcgEdge]) -> dict[str, list[str]]:
    adj: dict[str, list[str]] = {}
    for e in edges:
        adj.setdefault(e.src, []).append(e.dst)
        adj.setdefault(e.dst, [])
    for k in adj:
        adj[k].sort()
    return adj


def _find_cycle(adj: dict[str, list[str]]) -> list[tuple[str, str]] | None:
    """First cycle found by DFS from the smallest ids, or None."""
    color: dict[str, int] = {}
    for start in sorted(adj):
        if color.get(start):
            continue
        color[start] = 1
        path = [start]
        stack = [(start, iter(adj[start]))]
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                c = color.get(nxt, 0)
                if c == 0:
                    color[nxt] = 1
                    path.append(nxt)
                    stack.append((nxt, iter(adj[nxt])))
                    advanced = True
                    break
                if c == 1:
                    cyc = path[path.index(nxt):]
                    return list(zip(cyc, cyc[1:])) + [(node, nxt)]
            if not advanced:
                color[node] = 2
                stack.pop()
                path.pop()
    return None


def _effective_score(e: FcgEdge) -> float:
    return 1.0 if e.score is None else e.score


def break_cycles(graph: Fcg) -> Fcg:
    """Drop the weakest edge of each directed cycle until none remain.

    Only the abstraction subgraph is touched, and only edges on a found
    cycle are candidates. Ties on score fall back to the smallest
    (src, dst) pair. A DAG comes back unchanged.
    """
    out = graph.copy()
    while True:
        abs_edges = out.abstraction_edges()
        cycle = _find_cycle(_abs_adjacency(abs_edges))
        if cycle is None:
            return out
        on_cycle = set(cycle)
        candidates = [e for e in abs_edges if (e.src, e.dst) in on_cycle]
        victim = min(candidates,
                     key=lambda e: (_effective_score(e), e.src, e.dst))
        out.edges = [e for e in out.edges if e is not victim]


def transitive_reduce(graph: Fcg) -> Fcg:
    """Classical transitive reduction of the (acyclic) abstraction subgraph.

    An edge (u, w) goes when some other path u ~> w of length >= 2 exists;
    the reachability relation is untouched.
    """
    out = graph.copy()
    abs_edges = out.abstraction_edges()
    adj = _abs_adjacency(abs_edges)
    order = _topological_order(adj)
    if order is None:
        raise CyclicInput("abstraction subgraph has a cycle")
    idx = {n: i for i, n in enumerate(order)}
    n = len(order)
    desc = np.zeros((n, n), dtype=bool)
    for node in reversed(order):
        i = idx[node]
        for child in adj[node]:
            j = idx[child]
            desc[i, j] = True
            desc[i] |= desc[j]
    redundant = set()
    for e in abs_edges:
        u, w = idx[e.src], idx[e.dst]
        for v_name in adj[e.src]:
            v = idx[v_name]
            if v != w and desc[v, w]:
                redundant.add((e.src, e.dst, e.kind))
                break
    out.edges = [e for e in out.edges
                 if e.kind not in ABSTRACTION_KINDS
                 or (e.src, e.dst, e.kind) not in redundant]
    return out


def _topological_order(adj: dict[str, list[str]]) -> list[str] | None:
    indeg = {n: 0 for n in adj}
    for n in adj:
        for m in adj[n]:
            indeg[m] += 1
    ready = sorted(n for n in adj if indeg[n] == 0)
    order = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        for m in adj[node]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
        ready.sort()
    return order if len(order) == len(adj) else None


def finalize_abstractions(graph: Fcg) -> Fcg:
    return transitive_reduce(break_cycles(graph))


# ---------------------------------------------------------------------------
# persistence


def save_graph(fcg: Fcg, path: str | Path) -> None:
    doc = {
        "version": GRAPH_FORMAT_VERSION,
        "params": fcg.params,
        "nodes": [
            {"id": nd.id, "kind": nd.kind.value, "label": nd.label,
             "members": list(nd.members),
             "loose_cluster_id": nd.loose_cluster_id}
            for nd in sorted(fcg.nodes.values(), key=lambda nd: nd.id)],
        "edges": [
            {"src": e.src, "dst": e.dst, "kind": e.kind.value,
             "score": e.score, "witness": list(e.witness)}
            for e in fcg.sorted_edges()],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1, ensure_ascii=False)
        fh.write("\n")


def load_graph(path: str | Path) -> Fcg:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorruptFile(f"{path}: {e}") from e
    if not isinstance(doc, dict) or "version" not in doc:
        raise CorruptFile(f"{path}: missing version")
    if doc["version"] != GRAPH_FORMAT_VERSION:
        raise VersionMismatch(f"{path}: version {doc['version']!r}")
    fcg = Fcg(params=doc.get("params", {}))
    try:
        for nd in doc["nodes"]:
            fcg.add_node(FcgNode(id=nd["id"], kind=NodeKind(nd["kind"]),
                                 label=nd["label"],
                                 members=tuple(nd["members"]),
                                 loose_cluster_id=nd["loose_cluster_id"]))
        for e in doc["edges"]:
            fcg.add_edge(FcgEdge(src=e["src"], dst=e["dst"],
                                 kind=EdgeKind(e["kind"]), score=e["score"],
                                 witness=tuple(e["witness"])))
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFile(f"{path}: {e}") from e
    return fcg

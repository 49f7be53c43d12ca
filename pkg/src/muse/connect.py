"""Connectivity enhancement: LLM-proposed virtual abstractions (with decoy
validation), verb-synset virtual nodes, and cross-chunk linking.

Entailment only ever ran inside one loose cluster, so the interim graphs
are islands. Candidate nodes near the top of each island are wired across
islands with a second entailment pass and LLM abstraction proposals; verb
nodes cut across everything by construction.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cluster import kmeans
from .errors import UnparseableCompletion
from .graphcore import (
    ABSTRACTION_KINDS,
    EdgeKind,
    Fcg,
    FcgEdge,
    FcgNode,
    NodeKind,
    finalize_abstractions,
    node_id,
)
from .providers import FAKE_COMPLETION_MARKER
from .text import tokenize

log = logging.getLogger(__name__)

HEIGHT_BAND = 3       # candidates sit within this many levels of the top
TOP_DISTANCE = 2      # ... and exactly this many hops below their summit
DEFAULT_K_GROUPS = 5
DECOYS_PER_GROUP = 2


@dataclass(frozen=True)
class CandidateSet:
    loose_cluster_id: int
    node_ids: tuple[str, ...]


@dataclass(frozen=True)
class VerbLexicon:
    synsets: tuple[tuple[str, tuple[str, ...]], ...]

    def vocabulary(self) -> frozenset[str]:
        return frozenset(v for _, verbs in self.synsets for v in verbs)


def load_verb_lexicon(path: str | Path) -> VerbLexicon:
    """TSV rows: synset-id <tab> comma-separated verbs."""
    synsets = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            sid, _, verbs = line.partition("\t")
            words = tuple(sorted({w.strip().lower()
                                  for w in verbs.split(",") if w.strip()}))
            if not words:
                raise ValueError(f"synset {sid!r} has no verbs")
            synsets.append((sid, words))
    return VerbLexicon(synsets=tuple(synsets))


# ---------------------------------------------------------------------------
# candidate selection


def _interim_subgraph(fcg: Fcg, loose_cluster_id: int) -> dict[str, list[str]]:
    keep = {n.id for n in fcg.nodes.values()
            if n.kind is NodeKind.PROBLEM
            and n.loose_cluster_id == loose_cluster_id}
    adj = {n: [] for n in keep}
    for e in fcg.edges:
        if e.kind in ABSTRACTION_KINDS and e.src in keep and e.dst in keep:
            adj[e.src].append(e.dst)
    for n in adj:
        adj[n].sort()
    return adj


def _heights(adj: dict[str, list[str]]) -> dict[str, int]:
    """Longest-path height from the minimal elements, per node."""
    indeg = {n: 0 for n in adj}
    for n in adj:
        for m in adj[n]:
            indeg[m] += 1
    h = {n: 0 for n in adj}
    ready = sorted(n for n in adj if indeg[n] == 0)
    while ready:
        n = ready.pop(0)
        for m in adj[n]:
            h[m] = max(h[m], h[n] + 1)
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
        ready.sort()
    return h


def _distance_to_summit(node: str, adj: dict[str, list[str]],
                        h: dict[str, int]) -> int:
    """Hops from node to the nearest reachable node of maximal height."""
    from collections import deque
    dist = {node: 0}
    q = deque([node])
    reach = [node]
    while q:
        cur = q.popleft()
        for nxt in adj[cur]:
            if nxt not in dist:
                dist[nxt] = dist[cur] + 1
                reach.append(nxt)
                q.append(nxt)
    top = max(h[n] for n in reach)
    return min(dist[n] for n in reach if h[n] == top)


def select_candidates(fcg: Fcg, loose_cluster_id: int) -> CandidateSet:
    """Nodes high in their interim DAG but exactly two hops below a summit.

    Height is the longest directed path from any minimal element; a node
    qualifies when its height is within HEIGHT_BAND of the graph maximum
    and the nearest maximal-height node it can reach is TOP_DISTANCE hops
    away. These are general-but-not-topmost problems, the useful seeds for
    proposing new shared abstractions.
    """
    adj = _interim_subgraph(fcg, loose_cluster_id)
    if not adj:
        return CandidateSet(loose_cluster_id=loose_cluster_id, node_ids=())
    h = _heights(adj)
    h_max = max(h.values())
    chosen = [n for n in sorted(adj)
              if h[n] >= h_max - HEIGHT_BAND
              and _distance_to_summit(n, adj, h) == TOP_DISTANCE]
    return CandidateSet(loose_cluster_id=loose_cluster_id,
                        node_ids=tuple(chosen))


# ---------------------------------------------------------------------------
# LLM virtual abstractions


def _abstraction_prompt(member_labels: list[str], decoy_labels: list[str],
                        draft_label: str) -> str:
    listed = sorted(member_labels + decoy_labels)
    lines = ["Below is a list of engineering problems. Some of them share a",
             "more general goal; the rest are unrelated.", "",
             "Problems:"]
    lines += [f"- {lab}" for lab in listed]
    lines += ["",
              f"{draft_label} :: " + " | ".join(sorted(member_labels)),
              "Rewrite the line above so the left side names the shared goal",
              "and the right side keeps only problems from the list that",
              "truly share it, separated by ' | '."]
    return "\n".join(lines)


def _parse_abstraction_completion(completion: str,
                                  known: dict[str, str]) -> tuple[str, list[str]]:
    """Returns (label, matched node ids); raises UnparseableCompletion."""
    for raw in completion.splitlines():
        line = raw.strip()
        if line.startswith(FAKE_COMPLETION_MARKER):
            line = line[len(FAKE_COMPLETION_MARKER):].strip()
        if " :: " not in line:
            continue
        label, _, rest = line.partition(" :: ")
        label = label.strip()
        picked = []
        for part in rest.split("|"):
            node = known.get(part.strip().lower())
            if node is not None and node not in picked:
                picked.append(node)
        if label and picked:
            return label, picked
        break
    raise UnparseableCompletion(completion[:200])


def propose_llm_abstractions(fcg: Fcg, candidate_ids, emb, llm,
                             k_groups: int = DEFAULT_K_GROUPS,
                             loose_cluster_id: int | None = None,
                             seed: int = 0,
                             ) -> tuple[list[FcgNode], list[FcgEdge]]:
    """Group candidates, ask the completion provider for an abstraction per
    group, and keep proposals that pass decoy validation.

    Each group is salted with the two least-similar nodes of its farthest
    group; a proposal that claims any decoy alongside genuine members is
    thrown away, since a model that lumps unrelated problems in was never
    really abstracting.
    """
    cands = sorted(candidate_ids)
    if len(cands) < 2:
        return [], []
    labels = [fcg.nodes[c].label for c in cands]
    vecs = emb.embed(labels)
    k = min(k_groups, len(cands))
    assign = kmeans(vecs, k, seed=seed)
    groups: dict[int, list[int]] = defaultdict(list)
    for i, g in enumerate(assign):
        groups[int(g)].append(i)

    sims = vecs @ vecs.T
    new_nodes: list[FcgNode] = []
    new_edges: list[FcgEdge] = []
    for gid in sorted(groups):
        member_idx = groups[gid]
        decoy_idx: list[int] = []
        if len(groups) > 1:
            # farthest group: smallest minimum cross-similarity
            far_gid = min((g for g in sorted(groups) if g != gid),
                          key=lambda g: sims[np.ix_(member_idx,
                                                    groups[g])].min())
            far = groups[far_gid]
            # two decoys least similar (on average) to this group
            mean_sim = sims[np.ix_(member_idx, far)].mean(axis=0)
            order = sorted(range(len(far)),
                           key=lambda i: (mean_sim[i], cands[far[i]]))
            decoy_idx = [far[i] for i in order[:DECOYS_PER_GROUP]]

        member_ids = [cands[i] for i in member_idx]
        decoy_ids = [cands[i] for i in decoy_idx]
        member_labels = [fcg.nodes[c].label for c in member_ids]
        decoy_labels = [fcg.nodes[c].label for c in decoy_ids]
        draft = min(member_labels, key=lambda s: (len(s), s))
        prompt = _abstraction_prompt(member_labels, decoy_labels, draft)
        completion = llm.complete(prompt)
        known = {fcg.nodes[c].label.lower(): c for c in member_ids + decoy_ids}
        try:
            label, picked = _parse_abstraction_completion(completion, known)
        except UnparseableCompletion:
            log.warning("unparseable abstraction proposal for group %d", gid)
            continue
        picked_members = [p for p in picked if p in member_ids]
        picked_decoys = [p for p in picked if p in decoy_ids]
        if picked_decoys and picked_members:
            log.info("discarding abstraction %r: decoy chosen", label)
            continue
        if not picked_members:
            continue
        vid = node_id(NodeKind.VIRTUAL_LLM, label, picked_members)
        new_nodes.append(FcgNode(id=vid, kind=NodeKind.VIRTUAL_LLM,
                                 label=label,
                                 loose_cluster_id=loose_cluster_id))
        for m in sorted(picked_members):
            new_edges.append(FcgEdge(src=m, dst=vid,
                                     kind=EdgeKind.ABSTRACTION_LLM))
    return new_nodes, new_edges


# ---------------------------------------------------------------------------
# verb virtual nodes


def _label_verbs(label: str, vocab: frozenset[str]) -> set[str]:
    tokens = tokenize(label)
    if not tokens:
        return set()
    if tokens[0] in vocab:
        return {tokens[0]}
    return {t for t in tokens if t in vocab}


def build_verb_nodes(fcg: Fcg, lexicon: VerbLexicon,
                     ) -> tuple[list[FcgNode], list[FcgEdge]]:
    """One virtual node per verb synset reaching at least two problem nodes."""
    vocab = lexicon.vocabulary()
    verbs_by_node = {
        n.id: _label_verbs(n.label, vocab)
        for n in fcg.nodes.values() if n.kind is NodeKind.PROBLEM}
    nodes: list[FcgNode] = []
    edges: list[FcgEdge] = []
    for sid, verbs in lexicon.synsets:
        verb_set = set(verbs)
        matched = sorted(nid for nid, nv in verbs_by_node.items()
                         if nv & verb_set)
        if len(matched) < 2:
            continue
        label = " / ".join(verbs)
        vid = node_id(NodeKind.VIRTUAL_VERB, label, [sid])
        nodes.append(FcgNode(id=vid, kind=NodeKind.VIRTUAL_VERB, label=label))
        edges.extend(FcgEdge(src=m, dst=vid, kind=EdgeKind.ABSTRACTION_VERB)
                     for m in matched)
    return nodes, edges


# ---------------------------------------------------------------------------
# cross-chunk linking


def link_interim_graphs(fcg: Fcg, candidate_sets: list[CandidateSet], ent,
                        emb, llm, t: float, prefix: str,
                        k_groups: int = DEFAULT_K_GROUPS,
                        seed: int = 0) -> Fcg:
    """Connect candidates across interim graphs, then re-finalize.

    Runs the entailment pass over ordered cross-set pairs and the LLM
    abstraction pass over the pooled candidates; afterwards the merged
    abstraction subgraph gets the same cycle-removal and reduction
    treatment as each island did.
    """
    sets = [cs for cs in candidate_sets if cs.node_ids]
    if len(sets) < 2:
        return fcg
    out = fcg.copy()
    reps = {nid: out.nodes[nid].label
            for cs in sets for nid in cs.node_ids}
    for a in sets:
        for b in sets:
            if a.loose_cluster_id == b.loose_cluster_id:
                continue
            for u in a.node_ids:
                for v in b.node_ids:
                    s = ent.score(f"{prefix} {reps[u]}", f"{prefix} {reps[v]}")
                    if s >= t:
                        out.add_edge(FcgEdge(src=u, dst=v,
                                             kind=EdgeKind.ABSTRACTION_NLI,
                                             score=s))

    pool = sorted({nid for cs in sets for nid in cs.node_ids})
    nodes, edges = propose_llm_abstractions(out, pool, emb, llm,
                                            k_groups=k_groups,
                                            loose_cluster_id=None, seed=seed)
    for nd in nodes:
        out.add_node(nd)
    for e in edges:
        out.add_edge(e)
    return finalize_abstractions(out)

"""Stage orchestration over run directories.

Each stage reads the previous stage's files and writes its own, so every
step of a build is inspectable and re-runnable:

    ingest      -> documents.jsonl, cpc.tsv
    annotate    -> tags.jsonl
    cluster     -> clusters.json
    build-graph -> graph.json, index.json, meta.json
    enhance     -> graph.json (rewritten), index.json, meta.json

All outputs are deterministic for a fixed corpus, seed and provider set.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

from . import annotate as ann
from . import cluster as cl
from . import connect, corpus, graphcore, sampler, vectors
from .providers import CachedEmbeddingProvider, ProviderSet

DOCUMENTS_FILE = "documents.jsonl"
CPC_FILE = "cpc.tsv"
TAGS_FILE = "tags.jsonl"
CLUSTERS_FILE = "clusters.json"
GRAPH_FILE = "graph.json"
INDEX_FILE = "index.json"
META_FILE = "meta.json"
EMBED_CACHE_FILE = "embeddings.jsonl"


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_meta(out_dir: Path, stage: str, params: dict,
                inputs: dict[str, Path]) -> None:
    meta = {
        "stage": stage,
        "params": params,
        "inputs": {name: _digest(p) for name, p in inputs.items()},
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(out_dir / META_FILE, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _cached_embedding(providers: ProviderSet, out_dir: Path):
    return CachedEmbeddingProvider(providers.embedding,
                                   out_dir / EMBED_CACHE_FILE)


def ingest(input_path: str | Path, cpc_path: str | Path, sections: set[str],
           sample: int | None, seed: int, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = corpus.CorpusConfig(allowed_sections=frozenset(sections),
                              sample_size=sample, seed=seed)
    docs = corpus.load_corpus(input_path, cfg)
    entries = corpus.load_cpc_taxonomy(cpc_path)
    corpus.save_documents(docs, out / DOCUMENTS_FILE)
    corpus.save_taxonomy(entries, out / CPC_FILE)
    _write_meta(out, "ingest",
                {"sections": sorted(sections), "sample": sample, "seed": seed,
                 "documents": len(docs)},
                {"corpus": Path(input_path), "cpc": Path(cpc_path)})
    return out


def load_corpus_dir(corpus_dir: str | Path):
    d = Path(corpus_dir)
    docs = corpus.load_corpus(d / DOCUMENTS_FILE, corpus.CorpusConfig())
    entries = corpus.load_cpc_taxonomy(d / CPC_FILE)
    return docs, entries


def annotate_stage(corpus_dir: str | Path, providers: ProviderSet,
                   cls_threshold: float = 0.5,
                   out_dir: str | Path | None = None,
                   prompt_cfg: ann.PromptConfig | None = None) -> Path:
    src = Path(corpus_dir)
    out = Path(out_dir) if out_dir else src
    out.mkdir(parents=True, exist_ok=True)
    docs, entries = load_corpus_dir(src)
    emb = _cached_embedding(providers, out)

    kept = corpus.drop_leaf_level(entries) if entries else []
    spans = ann.split_cpc_titles(kept)
    spans = ann.filter_mechanism_titles(spans, providers.classifier,
                                        cls_threshold)
    spans_by_cpc: dict[str, list[str]] = {}
    for cpc_id, span in spans:
        spans_by_cpc.setdefault(cpc_id, [])
        if span not in spans_by_cpc[cpc_id]:
            spans_by_cpc[cpc_id].append(span)
    display = ann.span_display_map(kept)

    purposes: list[ann.PurposeTag] = []
    mechanisms: list[ann.MechanismTag] = []
    for doc in docs:
        purposes.extend(ann.extract_purposes(doc, providers.completion,
                                             prompt_cfg))
        mechanisms.extend(ann.assign_mechanisms(doc, spans_by_cpc, emb,
                                                display_by_span=display))
    ann.save_tags(purposes, mechanisms, out / TAGS_FILE)
    _write_meta(out, "annotate",
                {"cls_threshold": cls_threshold, "purpose_tags": len(purposes),
                 "mechanism_tags": len(mechanisms)},
                {"documents": src / DOCUMENTS_FILE, "cpc": src / CPC_FILE})
    return out


def cluster_stage(tags_dir: str | Path, providers: ProviderSet,
                  threshold: float = cl.DEFAULT_DISTANCE_THRESHOLD,
                  k_loose: int | None = None, seed: int = 0,
                  out_dir: str | Path | None = None) -> Path:
    src = Path(tags_dir)
    out = Path(out_dir) if out_dir else src
    out.mkdir(parents=True, exist_ok=True)
    purposes, mechanisms = ann.load_tags(src / TAGS_FILE)
    emb = _cached_embedding(providers, out)
    loose, problems = cl.build_problem_clusters(purposes, emb,
                                                k_loose=k_loose,
                                                threshold=threshold, seed=seed)
    solutions = cl.induce_solution_clusters(problems, purposes, mechanisms)
    cl.save_clusters(loose, problems, solutions, out / CLUSTERS_FILE)
    _write_meta(out, "cluster",
                {"threshold": threshold, "k_loose": k_loose, "seed": seed,
                 "loose": len(loose), "problems": len(problems),
                 "solutions": len(solutions)},
                {"tags": src / TAGS_FILE})
    return out


def build_graph_stage(clusters_dir: str | Path, providers: ProviderSet,
                      t: float = graphcore.DEFAULT_ENTAILMENT_THRESHOLD,
                      prefix: str = graphcore.DEFAULT_ENTAILMENT_PREFIX,
                      rep_policy: str = "medoid", seed: int = 0,
                      out_dir: str | Path | None = None) -> Path:
    src = Path(clusters_dir)
    out = Path(out_dir) if out_dir else src
    out.mkdir(parents=True, exist_ok=True)
    purposes, mechanisms = ann.load_tags(src / TAGS_FILE)
    loose, problems, solutions = cl.load_clusters(src / CLUSTERS_FILE)
    emb = _cached_embedding(providers, out)

    purpose_text = {tg.id: tg.text for tg in purposes}
    purpose_key = {tg.id: tg.member_key() for tg in purposes}
    purpose_doc = {tg.id: tg.doc_id for tg in purposes}
    mech_text = {tg.id: tg.text for tg in mechanisms}
    mech_key = {tg.id: tg.member_key() for tg in mechanisms}
    mech_doc = {tg.id: tg.doc_id for tg in mechanisms}
    mech_display = {tg.id: tg.display or tg.text for tg in mechanisms}

    fcg = graphcore.Fcg(params={
        "entailment_threshold": t, "entailment_prefix": prefix,
        "representative_policy": rep_policy, "seed": seed})

    problem_node_ids: dict[str, str] = {}  # cluster id -> node id
    for pc in problems:
        label = graphcore.representative(pc.members, purpose_text, emb,
                                         policy=rep_policy, seed=seed)
        nid = graphcore.node_id(graphcore.NodeKind.PROBLEM, label,
                                [purpose_key[m] for m in pc.members])
        fcg.add_node(graphcore.FcgNode(
            id=nid, kind=graphcore.NodeKind.PROBLEM, label=label,
            members=tuple(sorted(pc.members)),
            loose_cluster_id=pc.loose_cluster_id))
        problem_node_ids[pc.id] = nid

    solution_node_ids: dict[str, str] = {}
    for sc in solutions:
        rep = graphcore.representative(sc.members, mech_text, emb)
        rep_id = min(m for m in sc.members if mech_text[m] == rep)
        label = mech_display[rep_id]
        nid = graphcore.node_id(graphcore.NodeKind.SOLUTION, label,
                                [mech_key[m] for m in sc.members])
        fcg.add_node(graphcore.FcgNode(
            id=nid, kind=graphcore.NodeKind.SOLUTION, label=label,
            members=tuple(sorted(sc.members))))
        solution_node_ids[sc.id] = nid

    # entailment only within a loose cluster; the interim graphs are
    # node-disjoint, so one global finalize equals per-interim finalizes
    for lc in loose:
        reps = [(problem_node_ids[pc.id], fcg.nodes[problem_node_ids[pc.id]].label)
                for pc in problems if pc.loose_cluster_id == lc.id]
        for e in graphcore.nli_abstraction_edges(reps, providers.entailment,
                                                 t=t, prefix=prefix):
            fcg.add_edge(e)
    fcg = graphcore.finalize_abstractions(fcg)

    ps = graphcore.problem_solution_edges(
        [(problem_node_ids[pc.id], pc.members) for pc in problems],
        [(solution_node_ids[sc.id], sc.members) for sc in solutions],
        purpose_doc, mech_doc)
    for e in ps:
        fcg.add_edge(e)

    graphcore.save_graph(fcg, out / GRAPH_FILE)
    _save_problem_index(fcg, emb, out)
    _write_meta(out, "build-graph", dict(fcg.params),
                {"clusters": src / CLUSTERS_FILE, "tags": src / TAGS_FILE})
    return out


def _save_problem_index(fcg: graphcore.Fcg, emb, out: Path) -> None:
    nodes = sorted((n for n in fcg.nodes.values()
                    if n.kind is graphcore.NodeKind.PROBLEM),
                   key=lambda n: n.id)
    vecs = emb.embed([n.label for n in nodes])
    index = vectors.build_index([(n.id, vecs[i]) for i, n in enumerate(nodes)])
    vectors.save_index(index, out / INDEX_FILE)


def enhance_stage(graph_dir: str | Path, lexicon_path: str | Path,
                  providers: ProviderSet,
                  k_groups: int = connect.DEFAULT_K_GROUPS, seed: int = 0,
                  out_dir: str | Path | None = None) -> Path:
    src = Path(graph_dir)
    out = Path(out_dir) if out_dir else src
    out.mkdir(parents=True, exist_ok=True)
    fcg = graphcore.load_graph(src / GRAPH_FILE)
    emb = _cached_embedding(providers, out)
    t = fcg.params.get("entailment_threshold",
                       graphcore.DEFAULT_ENTAILMENT_THRESHOLD)
    prefix = fcg.params.get("entailment_prefix",
                            graphcore.DEFAULT_ENTAILMENT_PREFIX)

    loose_ids = sorted({n.loose_cluster_id for n in fcg.nodes.values()
                        if n.kind is graphcore.NodeKind.PROBLEM
                        and n.loose_cluster_id is not None})
    cand_sets = [connect.select_candidates(fcg, lc) for lc in loose_ids]
    for cs in cand_sets:
        nodes, edges = connect.propose_llm_abstractions(
            fcg, cs.node_ids, emb, providers.completion, k_groups=k_groups,
            loose_cluster_id=cs.loose_cluster_id, seed=seed)
        for nd in nodes:
            fcg.add_node(nd)
        for e in edges:
            fcg.add_edge(e)

    lexicon = connect.load_verb_lexicon(lexicon_path)
    nodes, edges = connect.build_verb_nodes(fcg, lexicon)
    for nd in nodes:
        fcg.add_node(nd)
    for e in edges:
        fcg.add_edge(e)

    fcg = connect.link_interim_graphs(fcg, cand_sets, providers.entailment,
                                      emb, providers.completion, t=t,
                                      prefix=prefix, k_groups=k_groups,
                                      seed=seed)
    fcg = graphcore.finalize_abstractions(fcg)
    fcg.params["enhanced"] = True
    fcg.params["k_groups"] = k_groups

    graphcore.save_graph(fcg, out / GRAPH_FILE)
    _save_problem_index(fcg, emb, out)
    _write_meta(out, "enhance", dict(fcg.params),
                {"lexicon": Path(lexicon_path)})
    return out


def load_snapshot(graph_dir: str | Path):
    d = Path(graph_dir)
    fcg = graphcore.load_graph(d / GRAPH_FILE)
    index = vectors.load_index(d / INDEX_FILE)
    return fcg, index


# Pinned demo/golden configuration. The bundled corpus is small enough for a
# single loose chunk, its taxonomy is hand-curated to mechanism-like entries
# (so the classifier gate is opened fully), and k_groups=2 exercises
# multi-member abstraction proposals on the three candidate nodes.
DEMO_EMBED_DIM = 768
DEMO_SEED = 0
DEMO_SECTIONS = frozenset({"A", "B", "F"})


def demo_providers():
    from .providers import fake_providers

    return fake_providers(dim=DEMO_EMBED_DIM, seed=DEMO_SEED)


def demo_build(out_dir: str | Path) -> Path:
    """Build the bundled demo snapshot end to end with fake providers."""
    from importlib import resources

    data = resources.files("muse.data")
    prov = demo_providers()
    out = Path(out_dir)
    ingest(str(data / "corpus_demo.jsonl"), str(data / "cpc_demo.tsv"),
           set(DEMO_SECTIONS), None, DEMO_SEED, out)
    annotate_stage(out, prov, cls_threshold=0.0)
    cluster_stage(out, prov, k_loose=1, seed=DEMO_SEED)
    build_graph_stage(out, prov, seed=DEMO_SEED)
    enhance_stage(out, str(data / "verb_lexicon.tsv"), prov, k_groups=2,
                  seed=DEMO_SEED)
    return out


def inspire(graph_dir: str | Path, problem: str, providers: ProviderSet,
            condition: sampler.Condition = sampler.Condition.PURPOSE,
            lam: float = sampler.DEFAULT_LAMBDA,
            per_bucket: int = sampler.DEFAULT_PER_BUCKET) -> list[dict]:
    fcg, index = load_snapshot(graph_dir)
    cfg = sampler.SamplerConfig(lam=lam, per_bucket=per_bucket)
    found = sampler.sample_inspirations(fcg, index, problem,
                                        providers.embedding, cfg)
    return [sampler.inspiration_to_dict(i, condition, providers.completion)
            for i in found]

"""The `muse` command line: pipeline stages, sampling, serving."""

from __future__ import annotations

import argparse
import json
import sys

from . import cluster, pipeline, sampler, service
from .providers import providers_from_env


def _add_provider_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["live", "fake"], default=None,
                   help="provider mode (default: MUSE_PROVIDER_MODE or fake)")
    p.add_argument("--embed-dim", type=int, default=256)
    p.add_argument("--provider-seed", type=int, default=0)


def _providers(args):
    return providers_from_env(mode=args.mode, dim=args.embed_dim,
                              seed=args.provider_seed)


def _k_loose(raw: str) -> int | None:
    if raw == "auto":
        return None
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError("k-loose must be >= 1 or 'auto'")
    return value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="muse",
                                 description="functional concept graphs and "
                                             "inspiration sampling")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="filter and sample the corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--cpc", required=True)
    p.add_argument("--sections", default="A,B,F",
                   help="comma-separated CPC sections ('' disables filtering)")
    p.add_argument("--sample", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("annotate", help="extract purpose and mechanism tags")
    p.add_argument("--corpus", required=True)
    p.add_argument("--cls-threshold", type=float, default=0.5)
    p.add_argument("--out", default=None)
    _add_provider_args(p)

    p = sub.add_parser("cluster", help="build problem and solution clusters")
    p.add_argument("--tags", required=True)
    p.add_argument("--threshold", type=float,
                   default=cluster.DEFAULT_DISTANCE_THRESHOLD)
    p.add_argument("--k-loose", type=_k_loose, default=None,
                   help="loose cluster count, or 'auto'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _add_provider_args(p)

    p = sub.add_parser("build-graph", help="nodes, entailment edges, finalize")
    p.add_argument("--clusters", required=True)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--prefix", default="I want")
    p.add_argument("--rep-policy", choices=["medoid", "seeded-random"],
                   default="medoid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _add_provider_args(p)

    p = sub.add_parser("enhance", help="virtual nodes and cross-chunk links")
    p.add_argument("--graph", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--k-groups", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _add_provider_args(p)

    p = sub.add_parser("inspire", help="sample inspirations for a problem")
    p.add_argument("problem")
    p.add_argument("--graph", required=True)
    p.add_argument("--condition",
                   choices=[c.value for c in sampler.Condition],
                   default="purpose")
    p.add_argument("--lambda", dest="lam", type=float,
                   default=sampler.DEFAULT_LAMBDA)
    p.add_argument("--per-bucket", type=int,
                   default=sampler.DEFAULT_PER_BUCKET)
    _add_provider_args(p)

    p = sub.add_parser("eval-clustering", help="purity and NMI of a clustering")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)

    p = sub.add_parser("serve", help="run the HTTP API over a snapshot")
    p.add_argument("--addr", default="127.0.0.1:8080")
    p.add_argument("--snapshot", required=True)
    _add_provider_args(p)

    return ap


def _load_partition(path: str) -> list[list]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, dict):
        doc = doc.get("clusters", doc)
    if not isinstance(doc, list):
        raise SystemExit(f"{path}: expected a list of clusters")
    return doc


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "ingest":
        sections = {s.strip() for s in args.sections.split(",") if s.strip()}
        out = pipeline.ingest(args.input, args.cpc, sections, args.sample,
                              args.seed, args.out)
        print(f"wrote corpus to {out}")
    elif args.command == "annotate":
        out = pipeline.annotate_stage(args.corpus, _providers(args),
                                      cls_threshold=args.cls_threshold,
                                      out_dir=args.out)
        print(f"wrote tags to {out}")
    elif args.command == "cluster":
        out = pipeline.cluster_stage(args.tags, _providers(args),
                                     threshold=args.threshold,
                                     k_loose=args.k_loose, seed=args.seed,
                                     out_dir=args.out)
        print(f"wrote clusters to {out}")
    elif args.command == "build-graph":
        out = pipeline.build_graph_stage(args.clusters, _providers(args),
                                         t=args.t, prefix=args.prefix,
                                         rep_policy=args.rep_policy,
                                         seed=args.seed, out_dir=args.out)
        print(f"wrote graph to {out}")
    elif args.command == "enhance":
        out = pipeline.enhance_stage(args.graph, args.lexicon,
                                     _providers(args),
                                     k_groups=args.k_groups, seed=args.seed,
                                     out_dir=args.out)
        print(f"wrote enhanced graph to {out}")
    elif args.command == "inspire":
        items = pipeline.inspire(args.graph, args.problem, _providers(args),
                                 condition=sampler.Condition(args.condition),
                                 lam=args.lam, per_bucket=args.per_bucket)
        json.dump(items, sys.stdout, indent=1, sort_keys=True,
                  ensure_ascii=False)
        print()
    elif args.command == "eval-clustering":
        pred = _load_partition(args.pred)
        gold = _load_partition(args.gold)
        print(f"purity {cluster.purity(pred, gold):.6f}")
        print(f"nmi {cluster.nmi(pred, gold):.6f}")
    elif args.command == "serve":
        service.serve(args.snapshot, args.addr, _providers(args))
    return 0


if __name__ == "__main__":
    sys.exit(main())

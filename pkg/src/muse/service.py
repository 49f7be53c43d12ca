"""Read-only HTTP API over an immutable graph snapshot.

The service never mutates a snapshot; rebuilds happen out of process and
get swapped in atomically (in-flight requests keep the snapshot object
they started with). Request ids are echoed on every response and carried
inside error bodies.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import pipeline, sampler
from .errors import EmptyText, NoAnchor, ProviderError
from .graphcore import ABSTRACTION_KINDS, EdgeKind, Fcg, NodeKind
from .providers import ProviderSet
from .vectors import NnIndex, nearest

PAGE_LIMIT = 200


@dataclass
class Snapshot:
    graph: Fcg
    index: NnIndex
    meta: dict


class SnapshotHolder:
    """Atomic reference to the live snapshot; readers never block."""

    def __init__(self, snapshot: Snapshot):
        self._snapshot = snapshot
        self._lock = threading.Lock()

    def get(self) -> Snapshot:
        return self._snapshot

    def swap(self, snapshot: Snapshot) -> Snapshot:
        with self._lock:
            old = self._snapshot
            self._snapshot = snapshot
            return old


def load_snapshot_dir(graph_dir: str | Path) -> Snapshot:
    fcg, index = pipeline.load_snapshot(graph_dir)
    return Snapshot(graph=fcg, index=index, meta=dict(fcg.params))


def _node_dict(fcg: Fcg, node_id: str) -> dict:
    n = fcg.nodes[node_id]
    return {"id": n.id, "kind": n.kind.value, "label": n.label,
            "members": list(n.members),
            "loose_cluster_id": n.loose_cluster_id}


def navigate(fcg: Fcg, node_id: str, relation: str) -> list[str]:
    """parents / children / solutions of a node, sorted by id."""
    if node_id not in fcg.nodes:
        raise KeyError(node_id)
    if relation == "parents":
        found = {e.dst for e in fcg.edges
                 if e.kind in ABSTRACTION_KINDS and e.src == node_id}
    elif relation == "children":
        found = {e.src for e in fcg.edges
                 if e.kind in ABSTRACTION_KINDS and e.dst == node_id}
    elif relation == "solutions":
        found = {e.dst for e in fcg.edges
                 if e.kind is EdgeKind.PROBLEM_SOLUTION and e.src == node_id}
    else:
        raise ValueError(relation)
    return sorted(found)


def create_app(holder: SnapshotHolder, providers: ProviderSet) -> FastAPI:
    app = FastAPI(title="muse", docs_url=None, redoc_url=None)

    def rid_of(request: Request) -> str:
        return request.headers.get("X-Request-ID") or uuid.uuid4().hex

    def ok(request: Request, body: dict, status: int = 200) -> JSONResponse:
        return JSONResponse(body, status_code=status,
                            headers={"X-Request-ID": rid_of(request)})

    def err(request: Request, status: int, code: str, message: str,
            ) -> JSONResponse:
        rid = rid_of(request)
        return JSONResponse(
            {"error": {"code": code, "message": message, "request_id": rid}},
            status_code=status, headers={"X-Request-ID": rid})

    @app.get("/health")
    def health(request: Request):
        snap = holder.get()
        return ok(request, {"status": "ok", "nodes": len(snap.graph.nodes),
                            "edges": len(snap.graph.edges)})

    @app.get("/nodes/{node_id}")
    def get_node(node_id: str, request: Request):
        snap = holder.get()
        if node_id not in snap.graph.nodes:
            return err(request, 404, "unknown_node", f"no node {node_id}")
        return ok(request, _node_dict(snap.graph, node_id))

    @app.get("/nodes/{node_id}/{relation}")
    def get_related(node_id: str, relation: str, request: Request,
                    offset: int = 0):
        snap = holder.get()
        if relation not in ("parents", "children", "solutions"):
            return err(request, 404, "unknown_relation",
                       f"no relation {relation}")
        if node_id not in snap.graph.nodes:
            return err(request, 404, "unknown_node", f"no node {node_id}")
        if offset < 0:
            return err(request, 400, "bad_offset", "offset must be >= 0")
        ids = navigate(snap.graph, node_id, relation)
        page = ids[offset:offset + PAGE_LIMIT]
        return ok(request, {
            "items": [_node_dict(snap.graph, i) for i in page],
            "offset": offset, "total": len(ids)})

    @app.get("/search")
    def search(request: Request, q: str = "", k: int = 5):
        snap = holder.get()
        if not q.strip():
            return err(request, 400, "empty_text", "q must be non-empty")
        if k < 1:
            return err(request, 400, "bad_k", "k must be >= 1")
        try:
            vec = providers.embedding.embed([q])[0]
        except EmptyText as e:
            return err(request, 400, "empty_text", str(e))
        except ProviderError as e:
            return err(request, 502, "provider_error", str(e))
        hits = nearest(snap.index, vec, k)
        return ok(request, {"items": [
            {"id": i, "label": snap.graph.nodes[i].label, "score": s}
            for i, s in hits]})

    @app.post("/inspire")
    async def inspire(request: Request):
        snap = holder.get()
        try:
            body = await request.json()
        except Exception:
            return err(request, 400, "bad_json", "body must be JSON")
        if not isinstance(body, dict) or not isinstance(body.get("problem"), str) \
                or not body["problem"].strip():
            return err(request, 400, "bad_problem",
                       "field 'problem' must be a non-empty string")
        try:
            condition = sampler.Condition(body.get("condition", "purpose"))
        except ValueError:
            return err(request, 400, "bad_condition",
                       f"unknown condition {body.get('condition')!r}")
        lam = body.get("lambda", sampler.DEFAULT_LAMBDA)
        per_bucket = body.get("per_bucket", sampler.DEFAULT_PER_BUCKET)
        if not isinstance(lam, (int, float)) or not 0.0 <= lam <= 1.0:
            return err(request, 400, "bad_lambda", "lambda must be in [0,1]")
        if not isinstance(per_bucket, int) or per_bucket < 1:
            return err(request, 400, "bad_per_bucket",
                       "per_bucket must be a positive integer")
        cfg = sampler.SamplerConfig(lam=float(lam), per_bucket=per_bucket)
        try:
            found = sampler.sample_inspirations(
                snap.graph, snap.index, body["problem"],
                providers.embedding, cfg)
            items = [sampler.inspiration_to_dict(i, condition,
                                                 providers.completion)
                     for i in found]
        except EmptyText as e:
            return err(request, 400, "empty_text", str(e))
        except NoAnchor as e:
            return err(request, 503, "no_anchor", str(e))
        except ProviderError as e:
            return err(request, 502, "provider_error", str(e))
        return ok(request, {"request_id": rid_of(request),
                            "problem": body["problem"],
                            "condition": condition.value, "items": items})

    return app


def serve(snapshot_dir: str | Path, addr: str, providers: ProviderSet) -> None:
    """Blocking entrypoint for `muse serve`."""
    import uvicorn

    holder = SnapshotHolder(load_snapshot_dir(snapshot_dir))
    app = create_app(holder, providers)
    host, _, port = addr.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port),
                log_level="warning")

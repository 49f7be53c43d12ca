"""Corpus ingestion: product records plus the CPC classification taxonomy.

Records are JSONL (one document per line); the taxonomy is a TSV of
``id, level, title`` rows. Filtering keeps documents whose CPC codes fall
in the configured top-level sections, then a seeded Fisher-Yates shuffle
picks a reproducible sample.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateId, MalformedRecord

VALID_SECTIONS = frozenset("ABCDEFGHY")


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    abstract: str
    cpc_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class CpcEntry:
    id: str
    title: str
    level: int

    @property
    def section(self) -> str:
        return self.id[0]


@dataclass(frozen=True)
class CorpusConfig:
    allowed_sections: frozenset[str] = frozenset()
    sample_size: int | None = None  # None = unbounded
    seed: int = 0

    def __post_init__(self):
        if self.sample_size is not None and self.sample_size < 1:
            raise ValueError("sample_size must be >= 1 when bounded")
        bad = set(self.allowed_sections) - VALID_SECTIONS
        if bad:
            raise ValueError(f"unknown CPC sections: {sorted(bad)}")


def _parse_document(line_no: int, raw: str) -> Document:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as e:
        raise MalformedRecord(line_no, f"invalid JSON: {e.msg}") from e
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, "record is not an object")
    for key in ("id", "title", "abstract"):
        if not isinstance(obj.get(key), str):
            raise MalformedRecord(line_no, f"missing or non-string field {key!r}")
    if not obj["title"]:
        raise MalformedRecord(line_no, "empty title")
    cpc_ids = obj.get("cpc_ids", [])
    if not isinstance(cpc_ids, list) or any(not isinstance(c, str) or not c for c in cpc_ids):
        raise MalformedRecord(line_no, "cpc_ids must be a list of non-empty strings")
    return Document(id=obj["id"], title=obj["title"], abstract=obj["abstract"],
                    cpc_ids=tuple(cpc_ids))


def _fisher_yates_sample(n: int, k: int, seed: int) -> list[int]:
    """Seeded Fisher-Yates over range(n); returns k selected indices, ascending."""
    rng = random.Random(seed)
    idx = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.randrange(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return sorted(idx[:k])


def load_corpus(path: str | Path, config: CorpusConfig) -> list[Document]:
    """Load, filter and sample the working corpus.

    Documents are kept when any of their CPC codes starts with an allowed
    section letter (an empty ``allowed_sections`` disables filtering, which
    also excludes nothing for documents without codes). The result stays in
    input order; sampling selects uniformly with the configured seed.
    """
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            doc = _parse_document(line_no, raw)
            if doc.id in seen:
                raise DuplicateId(doc.id)
            seen.add(doc.id)
            docs.append(doc)

    if config.allowed_sections:
        docs = [d for d in docs
                if any(c[0] in config.allowed_sections for c in d.cpc_ids)]

    if config.sample_size is not None and config.sample_size < len(docs):
        keep = _fisher_yates_sample(len(docs), config.sample_size, config.seed)
        docs = [docs[i] for i in keep]
    return docs


def load_cpc_taxonomy(path: str | Path) -> list[CpcEntry]:
    """Parse the taxonomy TSV (columns: id, level, title)."""
    entries: list[CpcEntry] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != 3:
                raise MalformedRecord(line_no, f"expected 3 tab-separated columns, got {len(parts)}")
            code, level_s, title = parts
            if not code or code[0] not in VALID_SECTIONS:
                raise MalformedRecord(line_no, f"bad CPC id {code!r}")
            try:
                level = int(level_s)
            except ValueError:
                raise MalformedRecord(line_no, f"non-integer level {level_s!r}") from None
            if level < 0:
                raise MalformedRecord(line_no, f"negative level {level}")
            entries.append(CpcEntry(id=code, title=title, level=level))
    return entries


def drop_leaf_level(entries: list[CpcEntry]) -> list[CpcEntry]:
    """Remove every entry sitting at the deepest level present."""
    if not entries:
        raise ValueError("entries must be non-empty")
    deepest = max(e.level for e in entries)
    return [e for e in entries if e.level != deepest]


def save_documents(docs: list[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(
                {"id": d.id, "title": d.title, "abstract": d.abstract,
                 "cpc_ids": list(d.cpc_ids)},
                sort_keys=True, ensure_ascii=False) + "\n")


def save_taxonomy(entries: list[CpcEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(f"{e.id}\t{e.level}\t{e.title}\n")

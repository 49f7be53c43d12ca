"""Per-document annotation: purpose tags from a completion model, mechanism
tags from CPC titles gated by the mechanism classifier.

Purpose extraction builds a 3-shot prompt (worked description/purpose pairs,
then the target description and a fixed question), sends it to the
completion provider, and parses the answer into one tag per sentence.
Mechanism tags never touch the document text beyond the title: the CPC
titles attached to the document are split into spans, classifier-filtered,
and the most title-relevant span per CPC code is kept.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .corpus import CpcEntry, Document
from .providers import FAKE_COMPLETION_MARKER, CompletionProvider
from .vectors import cosine

log = logging.getLogger(__name__)

PURPOSE_LEAD_IN = "The purpose of the patent is to"
MAX_TAG_LEN = 200

_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")
_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class PurposeTag:
    id: str
    doc_id: str
    text: str

    def member_key(self) -> str:
        return f"{self.doc_id}\x1f{self.text}"


@dataclass(frozen=True)
class MechanismTag:
    id: str
    doc_id: str
    cpc_id: str
    text: str         # lowercased span, used for matching and identity
    display: str = "" # original-cased span, used for node labels

    def member_key(self) -> str:
        return f"{self.doc_id}\x1f{self.cpc_id}\x1f{self.text}"


_DEFAULT_SHOTS = [
    ("Garden hose reel. A wall-mounted reel that winds a garden hose onto a "
     "drum with a hand crank, keeping the hose untangled and off the ground.",
     "store a garden hose neatly"),
    ("Insulated mug lid. A snap-on lid with a sliding closure that keeps "
     "drinks hot while preventing spills when the mug is carried.",
     "keep a drink hot and prevent spills"),
    ("Bicycle chain tensioner. A spring-loaded arm that presses on the chain "
     "of a single-speed bicycle so the chain stays taut as the parts wear.",
     "keep a bicycle chain taut"),
]

DEFAULT_INSTRUCTION = ("{description}\n"
                       "What is the purpose of the patent? "
                       "What is the context of the patent?")


@dataclass(frozen=True)
class PromptConfig:
    shots: tuple = tuple(_DEFAULT_SHOTS)
    instruction: str = DEFAULT_INSTRUCTION

    def __post_init__(self):
        if "{description}" not in self.instruction:
            raise ValueError("instruction needs a {description} slot")


def describe(doc: Document) -> str:
    """One-line description: title then abstract."""
    title = doc.title.strip()
    if title and title[-1] not in ".!?":
        title += "."
    return _WS_RE.sub(" ", f"{title} {doc.abstract}").strip()


def build_purpose_prompt(doc: Document, cfg: PromptConfig) -> str:
    parts = []
    for i, (desc, purpose) in enumerate(cfg.shots, start=1):
        parts.append(f"Example {i}:\n{_WS_RE.sub(' ', desc)}\n"
                     f"{PURPOSE_LEAD_IN} {purpose}.")
    parts.append("Your input:")
    parts.append(cfg.instruction.format(description=describe(doc)))
    return "\n\n".join(parts)


def normalize_tag_text(text: str) -> str:
    """Lowercase, collapse whitespace, strip trailing punctuation, cap length."""
    text = _WS_RE.sub(" ", text).strip().lower()
    text = text[:MAX_TAG_LEN]
    return text.rstrip(" .!?,;:")


def parse_purpose_completion(completion: str) -> list[str]:
    text = completion.strip()
    if text.startswith(FAKE_COMPLETION_MARKER):
        text = text[len(FAKE_COMPLETION_MARKER):].strip()
    out: list[str] = []
    for fragment in _SENTENCE_RE.split(text):
        fragment = fragment.strip()
        if fragment.lower().startswith(PURPOSE_LEAD_IN.lower()):
            fragment = fragment[len(PURPOSE_LEAD_IN):].strip()
        norm = normalize_tag_text(fragment)
        if norm and norm not in out:
            out.append(norm)
    return out


def extract_purposes(doc: Document, provider: CompletionProvider,
                     cfg: PromptConfig | None = None) -> list[PurposeTag]:
    """Ask the completion provider for the document's purposes.

    An empty completion is not fatal: the document simply stays untagged.
    Provider transport errors propagate to the caller.
    """
    cfg = cfg or PromptConfig()
    if not doc.title.strip() and not doc.abstract.strip():
        raise ValueError(f"document {doc.id} has no text")
    completion = provider.complete(build_purpose_prompt(doc, cfg))
    if not completion.strip():
        log.warning("empty completion for document %s; leaving it untagged",
                    doc.id)
        return []
    return [PurposeTag(id=f"{doc.id}:p{i}", doc_id=doc.id, text=t)
            for i, t in enumerate(parse_purpose_completion(completion))]


# ---------------------------------------------------------------------------
# mechanism side


def _split_title(title: str) -> list[str]:
    spans = []
    for part in title.split(";"):
        for piece in part.split(" or "):
            piece = piece.strip()
            if piece:
                spans.append(piece)
    return spans


def split_cpc_titles(entries: list[CpcEntry]) -> list[tuple[str, str]]:
    """Split multi-span CPC titles on ';' and ' or '; spans come back
    trimmed and lowercased."""
    return [(e.id, span.lower()) for e in entries
            for span in _split_title(e.title)]


def span_display_map(entries: list[CpcEntry]) -> dict[tuple[str, str], str]:
    """Original-cased span per (cpc_id, lowercased span), for node labels."""
    out: dict[tuple[str, str], str] = {}
    for e in entries:
        for span in _split_title(e.title):
            out.setdefault((e.id, span.lower()), span)
    return out


def filter_mechanism_titles(spans: list[tuple[str, str]], cls,
                            threshold: float = 0.5) -> list[tuple[str, str]]:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0,1]")
    return [(cpc_id, span) for cpc_id, span in spans
            if cls.score(span) >= threshold]


def assign_mechanisms(doc: Document, spans_by_cpc: dict[str, list[str]], emb,
                      display_by_span: dict[tuple[str, str], str] | None = None,
                      ) -> list[MechanismTag]:
    """Keep, per CPC code on the document, the span most similar to its title.

    Ties go to the lexicographically smallest span. Codes without surviving
    spans contribute nothing.
    """
    tags: list[MechanismTag] = []
    seen_codes: set[str] = set()
    for cpc_id in doc.cpc_ids:
        if cpc_id in seen_codes:
            continue
        seen_codes.add(cpc_id)
        cands = spans_by_cpc.get(cpc_id)
        if not cands:
            continue
        if len(cands) == 1:
            chosen = cands[0]
        else:
            vecs = emb.embed([doc.title] + list(cands))
            sims = [cosine(vecs[0], vecs[i + 1]) for i in range(len(cands))]
            best = max(sims)
            chosen = min(c for c, s in zip(cands, sims) if s == best)
        display = (display_by_span or {}).get((cpc_id, chosen), chosen)
        tags.append(MechanismTag(id=f"{doc.id}:m{len(tags)}", doc_id=doc.id,
                                 cpc_id=cpc_id, text=chosen, display=display))
    return tags


# ---------------------------------------------------------------------------
# tag persistence


def save_tags(purposes: list[PurposeTag], mechanisms: list[MechanismTag],
              path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in purposes:
            fh.write(json.dumps(
                {"id": t.id, "doc_id": t.doc_id, "kind": "purpose",
                 "text": t.text},
                sort_keys=True, ensure_ascii=False) + "\n")
        for t in mechanisms:
            fh.write(json.dumps(
                {"id": t.id, "doc_id": t.doc_id, "kind": "mechanism",
                 "text": t.text, "cpc_id": t.cpc_id, "display": t.display},
                sort_keys=True, ensure_ascii=False) + "\n")


def load_tags(path: str | Path) -> tuple[list[PurposeTag], list[MechanismTag]]:
    purposes: list[PurposeTag] = []
    mechanisms: list[MechanismTag] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if rec["kind"] == "purpose":
                purposes.append(PurposeTag(id=rec["id"], doc_id=rec["doc_id"],
                                           text=rec["text"]))
            else:
                mechanisms.append(MechanismTag(
                    id=rec["id"], doc_id=rec["doc_id"], cpc_id=rec["cpc_id"],
                    text=rec["text"], display=rec.get("display", rec["text"])))
    return purposes, mechanisms

"""Model-capability contracts: deterministic fakes plus live HTTP adapters.

Four capabilities back the pipeline: sentence embeddings, entailment
scoring, text completion, and the mechanism-relatedness classifier. Every
capability is a small duck-typed contract so the fake and live variants are
interchangeable everywhere downstream.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
import requests

from .errors import (
    AuthFailure,
    EmptyText,
    ProviderMalformedResponse,
    ProviderUnavailable,
)
from .text import content_tokens, stop_words, tokenize

FAKE_COMPLETION_MARKER = "ABSTRACT:"

# keyword fake for the mechanism classifier; mirrors the classifier's role
# without shipping a trained model
MECHANISM_KEYWORDS = ("apparatus", "device", "mechanism", "system", "means")


@runtime_checkable
class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, texts: list[str]) -> np.ndarray: ...


@runtime_checkable
class EntailmentProvider(Protocol):
    def score(self, premise: str, hypothesis: str) -> float: ...


@runtime_checkable
class CompletionProvider(Protocol):
    def complete(self, prompt: str, max_tokens: int = 256,
                 temperature: float = 0.0) -> str: ...


@runtime_checkable
class MechanismClassifier(Protocol):
    def score(self, title: str) -> float: ...


# ---------------------------------------------------------------------------
# deterministic fakes


class FakeEmbeddingProvider:
    """Seeded token-hashing embedder: stable, offline, unit-norm output.

    Hashes content tokens only (stop words carry no meaning and would let
    articles dominate the geometry of short phrases).
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.seed = seed
        self._key = seed.to_bytes(8, "little", signed=True)

    def _bucket(self, token: str) -> int:
        h = hashlib.blake2b(token.encode("utf-8"), key=self._key, digest_size=8)
        return int.from_bytes(h.digest(), "little") % self.dim

    def embed(self, texts: list[str]) -> np.ndarray:
        stop = stop_words()
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = [t for t in tokenize(text) if t not in stop]
            if not tokens:
                raise EmptyText(f"no content tokens to embed: {text!r}")
            for tok in tokens:
                out[row, self._bucket(tok)] += 1.0
            out[row] /= np.linalg.norm(out[row])
        assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-9)
        return out


class FakeEntailmentProvider:
    """Content-token coverage of the hypothesis by the premise."""

    def score(self, premise: str, hypothesis: str) -> float:
        if not premise.strip() or not hypothesis.strip():
            raise EmptyText("entailment inputs must be non-empty")
        hyp = content_tokens(hypothesis)
        if not hyp:
            # hypothesis is all stop words: vacuously entailed
            return 1.0
        s = len(hyp & content_tokens(premise)) / len(hyp)
        assert 0.0 <= s <= 1.0
        return s


class FakeCompletionProvider:
    """Echoes the first line of the prompt's final instruction block.

    Blocks are blank-line separated; the echoed line is prefixed with
    ``ABSTRACT:`` so callers can recognize fake output.
    """

    def complete(self, prompt: str, max_tokens: int = 256,
                 temperature: float = 0.0) -> str:
        blocks = [b for b in re.split(r"\n[ \t]*\n", prompt) if b.strip()]
        if not blocks:
            raise EmptyText("empty prompt")
        first_line = blocks[-1].strip().splitlines()[0].strip()
        words = f"{FAKE_COMPLETION_MARKER} {first_line}".split()
        return " ".join(words[:max(1, max_tokens)])


class FakeMechanismClassifier:
    """1.0 when the title mentions any mechanism keyword, else 0.0."""

    def score(self, title: str) -> float:
        low = title.lower()
        return 1.0 if any(k in low for k in MECHANISM_KEYWORDS) else 0.0


# ---------------------------------------------------------------------------
# live HTTP adapters

_TRANSIENT_STATUSES = frozenset({500, 502, 503, 504, 429})


@dataclass
class HttpConfig:
    attempts: int = 3
    backoff_base: float = 0.2
    backoff_cap: float = 2.0
    timeout: float = 30.0
    max_in_flight: int = 8
    batch_size: int = 32


class _HttpAdapter:
    def __init__(self, endpoint: str, auth: str | None = None,
                 http: HttpConfig | None = None,
                 audit_path: str | Path | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.auth = auth
        self.http = http or HttpConfig()
        self.audit_path = Path(audit_path) if audit_path else None
        self._session = requests.Session()
        self._gate = threading.Semaphore(self.http.max_in_flight)
        self._audit_lock = threading.Lock()

    def _post(self, payload: dict) -> dict:
        """POST with capped exponential backoff; 3 attempts by default."""
        headers = {"Content-Type": "application/json"}
        if self.auth:
            headers["Authorization"] = f"Bearer {self.auth}"
        last_err: Exception | None = None
        for attempt in range(self.http.attempts):
            if attempt:
                time.sleep(min(self.http.backoff_base * 2 ** (attempt - 1),
                               self.http.backoff_cap))
            try:
                with self._gate:
                    resp = self._session.post(self.endpoint, json=payload,
                                              headers=headers,
                                              timeout=self.http.timeout)
            except requests.RequestException as e:
                last_err = e
                continue
            if resp.status_code in (401, 403):
                raise AuthFailure(f"{self.endpoint}: HTTP {resp.status_code}")
            if resp.status_code in _TRANSIENT_STATUSES:
                last_err = ProviderUnavailable(
                    f"{self.endpoint}: HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProviderMalformedResponse(
                    f"{self.endpoint}: HTTP {resp.status_code}")
            try:
                body = resp.json()
            except ValueError as e:
                raise ProviderMalformedResponse(
                    f"{self.endpoint}: response is not JSON") from e
            self._audit(payload, body)
            return body
        raise ProviderUnavailable(
            f"{self.endpoint}: gave up after {self.http.attempts} attempts "
            f"({last_err})")

    def _audit(self, payload: dict, body: dict) -> None:
        if self.audit_path is None:
            return
        with self._audit_lock, open(self.audit_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"request": payload, "response": body},
                                ensure_ascii=False) + "\n")


class LiveEmbeddingProvider(_HttpAdapter):
    """POST {"texts": [...]} -> {"vectors": [[...], ...]}."""

    def __init__(self, endpoint: str, dim: int, **kw):
        super().__init__(endpoint, **kw)
        self.dim = dim

    def embed(self, texts: list[str]) -> np.ndarray:
        if any(not t.strip() for t in texts):
            raise EmptyText("cannot embed empty text")
        out = np.empty((len(texts), self.dim), dtype=np.float64)
        bs = self.http.batch_size
        for start in range(0, len(texts), bs):
            chunk = texts[start:start + bs]
            body = self._post({"texts": chunk})
            vectors = body.get("vectors")
            if not isinstance(vectors, list) or len(vectors) != len(chunk):
                raise ProviderMalformedResponse("bad vectors payload")
            for i, vec in enumerate(vectors):
                if not isinstance(vec, list) or len(vec) != self.dim:
                    raise ProviderMalformedResponse(
                        f"expected vectors of length {self.dim}")
                v = np.asarray(vec, dtype=np.float64)
                n = np.linalg.norm(v)
                if n == 0:
                    raise ProviderMalformedResponse("zero vector in response")
                out[start + i] = v / n
        return out


class LiveEntailmentProvider(_HttpAdapter):
    """POST {"pairs": [{"premise", "hypothesis"}]} -> {"scores": [...]}."""

    def score(self, premise: str, hypothesis: str) -> float:
        return self.score_pairs([(premise, hypothesis)])[0]

    def score_pairs(self, pairs: list[tuple[str, str]]) -> list[float]:
        if any(not p.strip() or not h.strip() for p, h in pairs):
            raise EmptyText("entailment inputs must be non-empty")
        scores: list[float] = []
        bs = self.http.batch_size
        for start in range(0, len(pairs), bs):
            chunk = pairs[start:start + bs]
            body = self._post({"pairs": [
                {"premise": p, "hypothesis": h} for p, h in chunk]})
            got = body.get("scores")
            if not isinstance(got, list) or len(got) != len(chunk):
                raise ProviderMalformedResponse("bad scores payload")
            for s in got:
                if not isinstance(s, (int, float)) or not 0.0 <= s <= 1.0:
                    raise ProviderMalformedResponse(
                        f"entailment score out of [0,1]: {s!r}")
                scores.append(float(s))
        return scores


class LiveCompletionProvider(_HttpAdapter):
    """POST {"prompt", "max_tokens", "temperature"} -> {"text"}."""

    def complete(self, prompt: str, max_tokens: int = 256,
                 temperature: float = 0.0) -> str:
        if not prompt.strip():
            raise EmptyText("empty prompt")
        body = self._post({"prompt": prompt, "max_tokens": max_tokens,
                           "temperature": temperature})
        text = body.get("text")
        if not isinstance(text, str):
            raise ProviderMalformedResponse("completion response missing text")
        return text


class LiveMechanismClassifier(_HttpAdapter):
    """POST {"titles": [...]} -> {"scores": [...]}."""

    def score(self, title: str) -> float:
        body = self._post({"titles": [title]})
        got = body.get("scores")
        if not isinstance(got, list) or len(got) != 1 \
                or not isinstance(got[0], (int, float)):
            raise ProviderMalformedResponse("bad classifier payload")
        return float(got[0])


# ---------------------------------------------------------------------------
# embedding cache


class CachedEmbeddingProvider:
    """Exact-text embedding cache, optionally persisted as JSONL.

    Extraction and clustering revisit the same strings many times; the live
    adapters are slow and billed, so cache hits matter there. Safe to layer
    over the fake too.
    """

    def __init__(self, inner: EmbeddingProvider, path: str | Path | None = None):
        self.inner = inner
        self.dim = inner.dim
        self.path = Path(path) if path else None
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    rec = json.loads(line)
                    self._cache[rec["text"]] = np.asarray(rec["vector"],
                                                          dtype=np.float64)

    def embed(self, texts: list[str]) -> np.ndarray:
        with self._lock:
            missing = sorted({t for t in texts if t not in self._cache})
        if missing:
            vecs = self.inner.embed(missing)
            with self._lock:
                for t, v in zip(missing, vecs):
                    self._cache[t] = v
                if self.path:
                    with open(self.path, "a", encoding="utf-8") as fh:
                        for t in missing:
                            fh.write(json.dumps(
                                {"text": t, "vector": self._cache[t].tolist()})
                                + "\n")
        with self._lock:
            return np.stack([self._cache[t] for t in texts])


# ---------------------------------------------------------------------------
# wiring


@dataclass
class ProviderSet:
    embedding: EmbeddingProvider
    entailment: EntailmentProvider
    completion: CompletionProvider
    classifier: MechanismClassifier
    mode: str = "fake"


def fake_providers(dim: int = 256, seed: int = 0) -> ProviderSet:
    return ProviderSet(
        embedding=FakeEmbeddingProvider(dim=dim, seed=seed),
        entailment=FakeEntailmentProvider(),
        completion=FakeCompletionProvider(),
        classifier=FakeMechanismClassifier(),
        mode="fake",
    )


def providers_from_env(mode: str | None = None, dim: int = 256,
                       seed: int = 0) -> ProviderSet:
    """Build the provider set from MUSE_* environment variables.

    MUSE_PROVIDER_MODE selects live|fake (callers may override); live mode
    reads MUSE_EMBED_ENDPOINT, MUSE_NLI_ENDPOINT, MUSE_LLM_ENDPOINT,
    MUSE_CLS_ENDPOINT and MUSE_API_KEY.
    """
    mode = (mode or os.environ.get("MUSE_PROVIDER_MODE", "fake")).lower()
    if mode == "fake":
        return fake_providers(dim=dim, seed=seed)
    if mode != "live":
        raise ValueError(f"unknown provider mode {mode!r}")
    auth = os.environ.get("MUSE_API_KEY")

    def need(var: str) -> str:
        val = os.environ.get(var)
        if not val:
            raise ValueError(f"live mode requires {var}")
        return val

    return ProviderSet(
        embedding=LiveEmbeddingProvider(need("MUSE_EMBED_ENDPOINT"), dim=dim,
                                        auth=auth),
        entailment=LiveEntailmentProvider(need("MUSE_NLI_ENDPOINT"), auth=auth),
        completion=LiveCompletionProvider(need("MUSE_LLM_ENDPOINT"), auth=auth),
        classifier=LiveMechanismClassifier(need("MUSE_CLS_ENDPOINT"), auth=auth),
        mode="live",
    )

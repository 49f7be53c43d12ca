"""Tokenization shared by the fake providers and the annotation pass."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_TOKEN_RE = re.compile(r"[a-z]+")


@lru_cache(maxsize=1)
def stop_words() -> frozenset[str]:
    """The fixed 50-word stop list shipped with the package."""
    raw = resources.files("muse.data").joinpath("stopwords.txt").read_text("utf-8")
    words = frozenset(w for w in raw.split() if w)
    assert len(words) == 50
    return words


def tokenize(text: str) -> list[str]:
    """Lowercased alphabetic tokens, in order."""
    return _TOKEN_RE.findall(text.lower())


def content_tokens(text: str) -> set[str]:
    """Token set with stop words removed."""
    return set(tokenize(text)) - stop_words()

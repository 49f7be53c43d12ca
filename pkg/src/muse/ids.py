"""Stable content-derived identifiers for clusters and graph nodes."""

from __future__ import annotations

import hashlib

_SEP = "\x1f"


def stable_id(*parts: str) -> str:
    """16-hex-char sha256 of the joined parts; rebuild-stable by construction."""
    h = hashlib.sha256(_SEP.join(parts).encode("utf-8"))
    return h.hexdigest()[:16]

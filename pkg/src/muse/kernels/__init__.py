"""Hot-loop kernels with a numba backend and a pure-numpy fallback.

The backend is picked once at import time from the ``MUSE_NUMBA`` env var:
``1`` forces numba (import error if unavailable), ``0`` forces the numpy
fallback, anything else tries numba and silently falls back. Both backends
are kept in lockstep by tests/test_kernels.py.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy

_TRUTHY = ("1", "true", "on", "yes")
_FALSY = ("0", "false", "off", "no")


def _pick_backend():
    flag = os.environ.get("MUSE_NUMBA", "auto").strip().lower()
    if flag in _FALSY:
        return _numpy, "numpy"
    try:
        from . import _numba
    except ImportError:
        if flag in _TRUTHY:
            raise
        return _numpy, "numpy"
    return _numba, "numba"


_backend, BACKEND_NAME = _pick_backend()

complete_linkage_merge = _backend.complete_linkage_merge
assign_nearest = _backend.assign_nearest
mmr_order = _backend.mmr_order


def backends() -> dict[str, object]:
    """All importable backends, keyed by name (for tests and benchmarks)."""
    out: dict[str, object] = {"numpy": _numpy}
    try:
        from . import _numba
        out["numba"] = _numba
    except ImportError:
        pass
    return out


def resolve_labels(parent: np.ndarray) -> np.ndarray:
    """Collapse a merge-parent array into final cluster labels.

    Labels are the root slot indices, i.e. each cluster is labelled by its
    smallest member index.
    """
    n = parent.shape[0]
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        r = i
        while parent[r] != r:
            r = parent[r]
        labels[i] = r
    return labels

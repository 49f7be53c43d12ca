"""Backend lockstep: the numba kernels and the numpy fallbacks must agree
bit for bit, since golden outputs may be produced under either."""

import numpy as np
import pytest

from muse.kernels import backends, resolve_labels

ALL = backends()
HAVE_BOTH = set(ALL) == {"numpy", "numba"}

pytestmark = pytest.mark.skipif(not HAVE_BOTH,
                                reason="numba backend unavailable")


def unit_rows(n, d, rng):
    m = rng.standard_normal((n, d))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def test_complete_linkage_merge_identical():
    rng = np.random.default_rng(11)
    for trial in range(30):
        n = int(rng.integers(2, 40))
        x = unit_rows(n, int(rng.integers(2, 8)), rng)
        dist = 1.0 - x @ x.T
        thr = float(rng.choice([0.1, 0.2, 0.4, 0.8]))
        a = ALL["numpy"].complete_linkage_merge(dist, thr)
        b = ALL["numba"].complete_linkage_merge(dist, thr)
        assert np.array_equal(a, b)
        assert np.array_equal(resolve_labels(a), resolve_labels(b))


def test_assign_nearest_identical():
    rng = np.random.default_rng(12)
    for trial in range(30):
        n, k, d = int(rng.integers(1, 60)), int(rng.integers(1, 8)), 5
        x = unit_rows(n, d, rng)
        c = unit_rows(k, d, rng)
        gram = x @ c.T
        c2 = np.einsum("ij,ij->i", c, c)
        assert np.array_equal(ALL["numpy"].assign_nearest(gram, c2),
                              ALL["numba"].assign_nearest(gram, c2))


def test_mmr_order_identical():
    rng = np.random.default_rng(13)
    for trial in range(30):
        n = int(rng.integers(1, 40))
        x = unit_rows(n, 6, rng)
        q = unit_rows(1, 6, rng)[0]
        rel = x @ q
        sim = x @ x.T
        lam = float(rng.choice([0.0, 0.3, 0.7, 1.0]))
        limit = int(rng.integers(1, n + 3))
        assert np.array_equal(ALL["numpy"].mmr_order(rel, sim, lam, limit),
                              ALL["numba"].mmr_order(rel, sim, lam, limit))


def test_backend_env_flag(monkeypatch):
    import importlib

    import muse.kernels as K

    monkeypatch.setenv("MUSE_NUMBA", "0")
    reloaded = importlib.reload(K)
    assert reloaded.BACKEND_NAME == "numpy"
    monkeypatch.delenv("MUSE_NUMBA")
    importlib.reload(K)

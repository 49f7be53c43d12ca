import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from muse import pipeline
from muse.providers import fake_providers


@pytest.fixture
def providers():
    return fake_providers(dim=256, seed=0)


@pytest.fixture(scope="session")
def demo_dir(tmp_path_factory):
    """One demo snapshot shared by the read-only tests."""
    out = tmp_path_factory.mktemp("demo")
    pipeline.demo_build(out)
    return out


@pytest.fixture(scope="session")
def demo_providers():
    return pipeline.demo_providers()

import os

import numpy as np
import pytest

from lowrank_flow import linalg
from lowrank_flow.manifold import LowRankState

CRITERIA = []


def random_state(rng, n, m, r, core=None):
    u = linalg.random_orthonormal(n, r, rng)
    v = linalg.random_orthonormal(m, r, rng)
    g = rng.standard_normal((r, r)) if core is None else core
    return LowRankState(u, g, v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def reference_cache(tmp_path_factory):
    """Directory for cached Euler references (honours LOWRANK_CACHE_DIR)."""
    path = os.environ.get("LOWRANK_CACHE_DIR") or str(tmp_path_factory.mktemp("refcache"))
    old = os.environ.get("LOWRANK_CACHE_DIR")
    os.environ["LOWRANK_CACHE_DIR"] = path
    yield path
    if old is None:
        os.environ.pop("LOWRANK_CACHE_DIR", None)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(CRITERIA):
        terminalreporter.write_line(line)

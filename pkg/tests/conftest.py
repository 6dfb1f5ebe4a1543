import numpy as np
import pytest

from aopoffload import sim
from aopoffload.config import ScenarioConfig


def small_config(**kw) -> ScenarioConfig:
    base = dict(n_sites=30, n_wifi=2, n_ru=2, n_oru=2, vehicle_count=5, horizon=10, max_outer=20)
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture(scope="session")
def small_topology():
    cfg = small_config()
    return sim.prepare_topology(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

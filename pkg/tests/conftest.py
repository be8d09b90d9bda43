import numpy as np
import pytest

from dsiso.decomposition import AgentMeasurementModel, PlantModel
from dsiso.intervals import IntervalVector


def random_system(rng, n=None, m=None, n_p=None, rank=None, n_w=None, n_v=None):
    """Random plant plus one agent that satisfies the decoupling rank condition."""
    n = n or int(rng.integers(2, 6))
    n_p = n_p or int(rng.integers(1, min(3, n) + 1))
    m = m or int(rng.integers(n_p + 1, n + n_p + 2))
    rank = int(rng.integers(0, n_p + 1)) if rank is None else rank
    n_w = n_w or int(rng.integers(1, 3))
    n_v = n_v or int(rng.integers(1, 3))
    A = rng.normal(size=(n, n))
    A *= 0.95 / max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
    plant = PlantModel(A, rng.normal(size=(n, n_w)), rng.normal(size=(n, n_p)),
                       IntervalVector.symmetric(rng.uniform(0.01, 0.5, n_w)),
                       IntervalVector.symmetric(rng.uniform(0.5, 2.0, n)))
    H = rng.normal(size=(m, rank)) @ rng.normal(size=(rank, n_p)) if rank else np.zeros((m, n_p))
    agent = AgentMeasurementModel(rng.normal(size=(m, n)), rng.normal(size=(m, n_v)), H,
                                  IntervalVector.symmetric(rng.uniform(0.01, 0.1, n_v)))
    return plant, agent


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

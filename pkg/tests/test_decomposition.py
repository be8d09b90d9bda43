import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_system
from dsiso.decomposition import (AgentMeasurementModel, AssumptionViolated, PlantModel, decompose,
                                 reconstruct_input, transform_measurement)
from dsiso.intervals import IntervalVector


def _plant(n, G, n_w=1):
    return PlantModel(0.5 * np.eye(n), np.ones((n, n_w)), G, IntervalVector.symmetric(np.ones(n_w)),
                      IntervalVector.symmetric(np.ones(n)))


def _agent(C, H, n_v=None):
    m = np.asarray(C).shape[0]
    n_v = n_v or m
    return AgentMeasurementModel(C, np.eye(m, n_v), H, IntervalVector.symmetric(np.full(n_v, 0.1)))


def test_diagonal_feedthrough():
    model = decompose(_plant(2, np.eye(2)), _agent(np.eye(2), [[2.0, 0.0], [0.0, 0.0]]))
    assert model.rank == 1
    np.testing.assert_allclose(model.S, [[2.0]])
    np.testing.assert_allclose(model.M2 @ model.C2 @ model.G2, [[1.0]], atol=1e-12)
    z1, z2 = transform_measurement(model, np.array([3.0, 4.0]))
    np.testing.assert_allclose(z1, [3.0])
    np.testing.assert_allclose(z2, [4.0])


def test_no_feedthrough():
    C = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    model = decompose(_plant(2, np.array([[1.0], [0.0]])), _agent(C, np.zeros((3, 1))))
    assert model.rank == 0
    assert model.U1.shape == (3, 0)
    np.testing.assert_array_equal(model.U2, np.eye(3))
    np.testing.assert_array_equal(model.V2, np.eye(1))
    y = np.array([1.0, -2.0, 0.5])
    z1, z2 = transform_measurement(model, y)
    assert z1.size == 0
    np.testing.assert_array_equal(z2, y)
    np.testing.assert_array_equal(reconstruct_input(model, np.zeros(0), np.array([2.5])), [2.5])


def test_full_rank_feedthrough_needs_no_clean_channel():
    # r = m = n_p: every input direction is seen through z1, z2 is empty
    model = decompose(_plant(2, np.eye(2)), _agent(np.eye(2), [[1.0, 0.5], [0.0, 2.0]]))
    assert model.rank == 2
    assert not model.has_clean_channel
    assert model.C2.shape == (0, 2)
    assert model.M2.shape == (0, 0)


def test_random_rank_two_reconstruction(rng):
    H = rng.normal(size=(4, 2)) @ rng.normal(size=(2, 3))
    plant = _plant(3, rng.normal(size=(3, 3)))
    model = decompose(plant, _agent(rng.normal(size=(4, 3)), H))
    assert model.rank == 2
    np.testing.assert_allclose(model.U1 @ model.S @ model.V1.T, H, atol=1e-10)
    U = np.hstack([model.U1, model.U2])
    V = np.hstack([model.V1, model.V2])
    np.testing.assert_allclose(U.T @ U, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-10)


def test_substitution_and_purity(rng):
    plant, agent = random_system(rng, n=4, m=5, n_p=2, rank=1)
    model = decompose(plant, agent)
    x, v = rng.normal(size=4), rng.normal(size=agent.n_v)
    for _ in range(5):
        d = 1e3 * rng.normal(size=2)
        y = agent.C @ x + agent.D @ v + agent.H @ d
        z1, z2 = transform_measurement(model, y)
        np.testing.assert_allclose(z1, model.C1 @ x + model.D1 @ v + model.S @ model.V1.T @ d, atol=1e-9)
        np.testing.assert_allclose(z2, model.C2 @ x + model.D2 @ v, atol=1e-9)
    np.testing.assert_array_equal(transform_measurement(model, np.zeros(5))[1], np.zeros(4))


def test_reconstruct_input(rng):
    plant, agent = random_system(rng, n=4, n_p=3, rank=2)
    model = decompose(plant, agent)
    d = rng.normal(size=3)
    np.testing.assert_allclose(reconstruct_input(model, model.V1.T @ d, model.V2.T @ d), d, atol=1e-12)
    assert not reconstruct_input(model, np.zeros(2), np.zeros(1)).any()
    with pytest.raises(ValueError):
        reconstruct_input(model, np.zeros(1), np.zeros(1))
    with pytest.raises(ValueError):
        transform_measurement(model, np.zeros(agent.m + 1))


def test_assumption_violation_names_agent():
    # G2 lies in the null space of C2
    G = np.array([[0.0], [1.0]])
    C = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(AssumptionViolated) as exc:
        decompose(_plant(2, G), _agent(C, np.zeros((2, 1))), agent_id=3)
    assert exc.value.agent == 3
    assert "agent 3" in str(exc.value)


def test_too_few_clean_rows():
    G = np.eye(2)
    with pytest.raises(AssumptionViolated, match="rows"):
        decompose(_plant(2, G), _agent(np.eye(2)[:1], np.zeros((1, 2))))


def test_rank_tolerance():
    H = np.array([[1.0, 0.0], [0.0, 1e-13]])
    model = decompose(_plant(2, np.eye(2)), _agent(np.eye(2), H))
    assert model.rank == 1
    model = decompose(_plant(2, np.eye(2)), _agent(np.eye(2), H), rank_tol=1e-15)
    assert model.rank == 2


def test_sign_convention_is_reproducible(rng):
    plant, agent = random_system(rng, n=3, m=4, n_p=2, rank=2)
    a = decompose(plant, agent)
    b = decompose(plant, agent)
    np.testing.assert_array_equal(a.U1, b.U1)
    for U in (a.U1, a.U2):
        idx = np.argmax(np.abs(U), axis=0)
        assert (U[idx, np.arange(U.shape[1])] > 0).all()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_decomposition_properties(seed):
    rng = np.random.default_rng(seed)
    plant, agent = random_system(rng)
    model = decompose(plant, agent)
    assert np.allclose(model.V1.T @ model.V2, 0.0, atol=1e-10)
    q = plant.n_p - model.rank
    if q:
        np.testing.assert_allclose(model.M2 @ model.C2 @ model.G2, np.eye(q), atol=1e-9)
    d = rng.normal(size=plant.n_p)
    np.testing.assert_allclose(reconstruct_input(model, model.V1.T @ d, model.V2.T @ d), d, atol=1e-10)
    x, v = rng.normal(size=plant.n), rng.normal(size=agent.n_v)
    base = transform_measurement(model, agent.C @ x + agent.D @ v)[1]
    moved = transform_measurement(model, agent.C @ x + agent.D @ v + agent.H @ (100 * d))[1]
    np.testing.assert_allclose(moved, base, atol=1e-10 * (1 + 100 * np.abs(agent.H).sum()))

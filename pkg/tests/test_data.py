from __future__ import annotations

import inspect

import numpy as np
import pytest
from conftest import random_system

from qconsensus.data import (
    TrajectoryBatch,
    check_excitation,
    collect_trajectory,
    hankel,
    pool_batches,
    solve_qfun_data,
)
from qconsensus.errors import ModelError, NotExciting, TrajectoryOverflow
from qconsensus.lqr import AgentModel, DesignConfig, solve_qfun_model


def test_hankel_scalar_example():
    np.testing.assert_array_equal(hankel([1, 2, 3, 4], 2), [[1, 2, 3], [2, 3, 4]])


def test_hankel_vector_example():
    u = np.array([[1, 10], [2, 20], [3, 30]])
    np.testing.assert_array_equal(hankel(u, 2), [[1, 2], [10, 20], [2, 3], [20, 30]])


def test_hankel_too_short():
    with pytest.raises(ValueError):
        hankel([1.0], 2)


def test_data_satisfy_dynamics(ex1):
    tb = collect_trajectory(ex1.model, 12, seed=3)
    np.testing.assert_allclose(tb.X, ex1.model.AB @ tb.D, atol=1e-10)
    assert tb.D.shape == (ex1.model.n + ex1.model.m, 12)


def test_default_length_is_minimal(ex1):
    tb = collect_trajectory(ex1.model, seed=0)
    assert tb.length == ex1.model.n + ex1.model.m
    with pytest.raises(ModelError):
        collect_trajectory(ex1.model, 2, seed=0)


def test_collection_is_deterministic(ex1):
    assert collect_trajectory(ex1.model, 8, seed=5) == collect_trajectory(ex1.model, 8, seed=5)
    assert collect_trajectory(ex1.model, 8, seed=5) != collect_trajectory(ex1.model, 8, seed=6)


def test_excitation_report(ex1):
    rep = check_excitation(collect_trajectory(ex1.model, 20, seed=1))
    assert rep.is_pe and rep.is_full_row_rank_D
    assert rep.hankel_order == ex1.model.n + 1


def test_zero_input_is_not_exciting(ex1):
    tb = collect_trajectory(ex1.model, 10, noise_std=0.0, seed=1)
    rep = check_excitation(tb)
    assert not rep.is_pe and not rep.is_full_row_rank_D
    with pytest.raises(NotExciting):
        solve_qfun_data(tb, DesignConfig(ex1.Q, 1.0, ex1.mu))


def test_overflow_is_reported():
    am = AgentModel([[3.0]], [[1.0]])
    with pytest.raises(TrajectoryOverflow):
        collect_trajectory(am, 40, seed=0)


def test_base_policy_is_applied():
    am = AgentModel([[1.0]], [[1.0]])
    tb = collect_trajectory(am, 5, noise_std=0.0, base_policy=lambda x: -x, x0=[4.0])
    np.testing.assert_allclose(tb.states[1:, 0], 0.0)
    np.testing.assert_allclose(tb.inputs[0], [-4.0])


def test_csv_round_trip(tmp_path, ex1):
    tb = collect_trajectory(ex1.model, 9, seed=2, k0=7)
    path = tmp_path / "traj.csv"
    tb.to_csv(path)
    back = TrajectoryBatch.from_csv(path)
    assert back == tb
    assert path.read_text().splitlines()[-1].endswith(",")


def test_csv_rejects_gaps():
    with pytest.raises(ModelError):
        TrajectoryBatch.parse_csv("k,x_1,u_1\n0,1.0,2.0\n2,3.0,\n")


def test_pooling_mismatch():
    a = TrajectoryBatch(0, 0, np.zeros((3, 2)), np.zeros((2, 1)))
    b = TrajectoryBatch(1, 0, np.zeros((3, 1)), np.zeros((2, 1)))
    with pytest.raises(ModelError):
        pool_batches([a, b])


def test_model_free_signature():
    params = inspect.signature(solve_qfun_data).parameters
    for p in params.values():
        assert "AgentModel" not in str(p.annotation)
    assert "am" not in params


def test_data_matches_model(ex1):
    cfg = DesignConfig(ex1.Q, 100.0, ex1.mu)
    qm = solve_qfun_model(ex1.model, cfg)
    qd = solve_qfun_data(collect_trajectory(ex1.model, seed=0), cfg)
    assert np.linalg.norm(qd.H - qm.H) <= 1e-5 * np.linalg.norm(qm.H)
    np.testing.assert_allclose(qd.K, qm.K, rtol=1e-4, atol=1e-6)


def test_compression_is_a_congruence():
    # long and minimal batches give the same Q-function on random systems
    rng = np.random.default_rng(4)
    for trial in range(30):
        A, B = random_system(rng, rho=(0.3, 1.1))
        am = AgentModel(A, B)
        cfg = DesignConfig(np.eye(am.n), float(10 ** rng.uniform(-1, 1)), 1.0)
        short = solve_qfun_data(collect_trajectory(am, seed=trial), cfg)
        long = solve_qfun_data(collect_trajectory(am, 4 * (am.n + am.m), seed=trial), cfg)
        assert np.linalg.norm(short.H - long.H) <= 1e-4 * (1 + np.linalg.norm(long.H))


def test_pooled_batches(ex1):
    cfg = DesignConfig(ex1.Q, 10.0, ex1.mu)
    batches = [collect_trajectory(ex1.model, seed=s, agent_id=s) for s in range(3)]
    pooled = solve_qfun_data(batches, cfg)
    single = solve_qfun_data(batches[0], cfg)
    assert np.linalg.norm(pooled.H - single.H) <= 1e-4 * np.linalg.norm(single.H)

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.optimize import golden

from qconsensus import sdp
from qconsensus.data import collect_trajectory
from qconsensus.errors import ConfigError, ModelError
from qconsensus.graph import dedup_modes, spectral_graph
from qconsensus.lqr import AgentModel, DesignConfig
from qconsensus.pipeline import (
    CouplingStrategy,
    FeasibilityTable,
    GainReport,
    Method,
    SweepConfig,
    TableCell,
    baseline_theorem3,
    build_feasibility_table,
    design,
    gamma_sweep,
    identified_model,
    minimize_mode_gap,
    verify_theorem7,
    worst_mode_gap,
)

Verdict = sdp.Verdict


def test_sweep_grids():
    Q = np.eye(2)
    assert SweepConfig(Q).grid() == [0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]
    assert SweepConfig(Q, gamma_max=1, step=0.25, factor=None).grid() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert SweepConfig(Q, gammas=(3.0, 1.0)).grid() == [3.0, 1.0]


@pytest.mark.parametrize(
    "kw",
    [
        {"gammas": ()},
        {"gamma0": -1.0},
        {"gamma0": 5.0, "gamma_max": 1.0},
        {"step": 0.0, "factor": None},
        {"factor": 1.0},
    ],
)
def test_sweep_grid_errors(kw):
    with pytest.raises(ConfigError):
        SweepConfig(np.eye(2), **kw).grid()


def test_mode_gap_two_real_modes():
    # max(|1 - c|, |1 - 2c|) is minimized where 1 - c = 2c - 1
    c, v = minimize_mode_gap([1 + 0j, 2 + 0j])
    assert c == pytest.approx(2 / 3, abs=1e-8)
    assert v == pytest.approx(1 / 3, abs=1e-8)


def test_mode_gap_against_golden_section_and_grid(ex3):
    lams = [m.complex for m in dedup_modes(ex3.graph)]
    c, v = minimize_mode_gap(lams)
    c_g = golden(lambda x: worst_mode_gap(x, lams), brack=(0.01, 0.2, 1.0), tol=1e-10)
    assert c == pytest.approx(c_g, abs=1e-6)
    grid = np.arange(1e-4, 2.0, 1e-4)
    assert v <= min(worst_mode_gap(x, lams) for x in grid) + 1e-8
    assert (c, v) == pytest.approx((0.2581, 0.5484), abs=1e-4)


def test_baseline_gamma_zero_is_infeasible(ex3):
    assert baseline_theorem3(ex3.model, ex3.Q, 0.0, ex3.graph).verdict == Verdict.INFEASIBLE


def test_baseline_theta_values(ex3):
    thetas = [baseline_theorem3(ex3.model, ex3.Q, g, ex3.graph).theta for g in (0.01, 1.0, 1000.0)]
    np.testing.assert_allclose(thetas, [0.0575, 0.444, 0.887], atol=1e-3)


def test_baseline_feasible_at_gamma_ten(ex3):
    r = baseline_theorem3(ex3.model, ex3.Q, 10.0, ex3.graph)
    assert r.feasible
    assert r.g_min < r.theta
    assert max(r.radii) < 1


def test_baseline_needs_full_rank_b():
    am = AgentModel(np.eye(2), np.zeros((2, 1)))
    with pytest.raises(ModelError):
        baseline_theorem3(am, np.eye(2), 1.0, spectral_graph([[0, 1], [1, 0.0]]))


def test_theorem7_unstable_monotone(unstable2):
    rep = verify_theorem7(unstable2.model, unstable2.Q, unstable2.mu, [(0.1, 1.0), (1.0, 10.0), (10.0, 100.0)])
    assert rep.strictly_unstable and rep.passed
    betas = [p.beta1 for p in rep.pairs] + [rep.pairs[-1].beta2]
    assert all(b1 > b2 for b1, b2 in zip(betas, betas[1:]))


def test_theorem7_stable_skips_beta(ex3):
    rep = verify_theorem7(ex3.model, ex3.Q, 1.0, [(0.1, 1.0)])
    assert not rep.strictly_unstable
    assert rep.pairs[0].beta_monotone is None
    assert rep.passed


def test_theorem7_rejects_unordered_pair(ex3):
    with pytest.raises(ConfigError):
        verify_theorem7(ex3.model, ex3.Q, 1.0, [(1.0, 0.1)])


def test_design_example1_model(ex1):
    rep = design(ex1.model, ex1.graph, DesignConfig(ex1.Q, 100.0, ex1.mu))
    assert rep.feasible and rep.certified
    assert max(rep.radii) < 1 / ex1.mu


def test_design_rejects_graph_without_spanning_tree(ex1):
    sg = spectral_graph(np.zeros((3, 3)))
    with pytest.raises(ModelError):
        design(ex1.model, sg, DesignConfig(ex1.Q, 1.0))


def test_data_design_certified_with_identified_model(ex1):
    batch = collect_trajectory(ex1.model, seed=0)
    ident = identified_model(batch)
    np.testing.assert_allclose(ident.AB, ex1.model.AB, atol=1e-8)
    rep = design(batch, ex1.graph, DesignConfig(ex1.Q, 100.0, ex1.mu))
    assert rep.certified_with == "identified"
    assert rep.feasible


def test_report_json_round_trip(ex1, tmp_path):
    rep = design(ex1.model, ex1.graph, DesignConfig(ex1.Q, 100.0, ex1.mu))
    path = tmp_path / "r.json"
    rep.to_json(path)
    back = GainReport.from_json(path.read_text())
    np.testing.assert_array_equal(back.K, rep.K)
    assert (back.c, back.verdict, back.radii) == (rep.c, rep.verdict, rep.radii)


def test_sweep_recommends_largest_feasible(ex3):
    sc = SweepConfig(ex3.Q, gammas=(1.0, 10.0, 100.0), coupling_path=CouplingStrategy.CONVEX_CONCAVE)
    res = gamma_sweep(sc, ex3.graph, ex3.model)
    assert [r.verdict for r in res.reports] == [Verdict.FEASIBLE] * 3
    assert res.recommended.gamma == 100.0


def test_sweep_stops_at_first_infeasible(ex3):
    sc = SweepConfig(ex3.Q, gammas=(0.0, 1.0), coupling_path=CouplingStrategy.CONVEX_CONCAVE)
    res = gamma_sweep(sc, ex3.graph, ex3.model)
    assert len(res.reports) == 1
    assert res.recommended is None and "gamma=0" in res.diagnostics


def test_single_cell_table(ex3):
    t = build_feasibility_table(ex3.model, ex3.graph, ex3.Q, 1.0, [10.0], [Method.BASELINE])
    assert t.pattern("Baseline") == "F"
    assert t.to_text().splitlines()[0].split() == ["method", "10"]


def test_table_csv_round_trip(tmp_path):
    t = FeasibilityTable(
        [
            TableCell("Theorem6", 0.0, Verdict.INFEASIBLE),
            TableCell("Theorem6", 1.0, Verdict.FEASIBLE, 0.4, 0.3, math.nan, 1.5),
        ]
    )
    path = tmp_path / "t.csv"
    t.to_csv(path)
    back = FeasibilityTable.parse_csv(path.read_text())
    assert back.pattern("Theorem6") == "IF"
    assert back.cells[1].beta == 0.4 and math.isnan(back.cells[1].alpha)
    assert not back.monotone_cutoff("Theorem6")
    with pytest.raises(ConfigError):
        FeasibilityTable.parse_csv("a,b\n")


def test_table_rejects_empty_gammas(ex3):
    with pytest.raises(ConfigError):
        build_feasibility_table(ex3.model, ex3.graph, ex3.Q, 1.0, [])

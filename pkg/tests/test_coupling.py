from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qconsensus import sdp
from qconsensus.coupling import (
    CouplingProblem,
    build_Ni,
    build_Sl,
    build_Sq,
    convex_concave_loop,
    gain_interval,
    max_beta,
    ni_scalar_test,
    pick_gain,
    post_check,
    solve_coupling_convex,
)
from qconsensus.errors import ModelError
from qconsensus.graph import Mode, dedup_modes, spectral_graph
from qconsensus.lqr import AgentModel, DesignConfig, solve_qfun_model
from qconsensus.numerics import is_psd
from qconsensus.sim import certify_modes

SCALAR = AgentModel([[0.5]], [[1.0]])
CYCLE3 = spectral_graph(np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0.0]]))


def _problem(am, sg, Q, gamma, mu=1.0):
    q = solve_qfun_model(am, DesignConfig(Q, gamma, mu))
    return CouplingProblem(q, Q, gamma, dedup_modes(sg))


@pytest.fixture(scope="module")
def scalar_cp():
    return _problem(SCALAR, CYCLE3, np.eye(1), 1.0)


@pytest.fixture(scope="module")
def ex3_problems(ex3):
    return {g: _problem(ex3.model, ex3.graph, ex3.Q, g) for g in (0.0, 1.0, 1000.0)}


def test_ni_real_mode_example():
    # lambda = 1: N = [[beta, c-1], [c-1, beta]]
    np.testing.assert_allclose(build_Ni(0.5, 1.2, Mode(1.0, 1.0)), [[0.5, 0.2], [0.2, 0.5]])
    assert ni_scalar_test(0.5, 1.2, Mode(1.0, 1.0))
    assert not ni_scalar_test(0.1, 1.2, Mode(1.0, 1.0))


def test_ni_rejects_zero_eigenvalue():
    with pytest.raises(ModelError):
        build_Ni(1.0, 1.0, Mode(0.0, 0.0))


@given(
    beta=st.floats(0, 3),
    c=st.floats(0, 3),
    theta=st.floats(-1.4, 1.4),
    r=st.floats(0.1, 4),
)
def test_ni_psd_matches_scalar_form(beta, c, theta, r):
    md = Mode(r * math.cos(theta), r)
    N = build_Ni(beta, c, md)
    lhs = 1 - 2 * c * md.re + c**2 * md.abs**2
    if abs(lhs - beta**2) < 1e-9 or abs(beta - md.s) < 1e-9:
        return
    assert is_psd(N, margin=0.0) == ni_scalar_test(beta, c, md)


def test_gain_interval_example():
    c1, c2 = gain_interval(0.5, [Mode(1.0, 1.0), Mode(2.0, 2.0)])
    assert (c1, c2) == pytest.approx((0.5, 0.75))
    assert pick_gain(c1, c2) == pytest.approx(0.625)


def test_gain_interval_empty_and_pick_floor():
    c1, c2 = gain_interval(0.1, [Mode(1.0, 1.0), Mode(3.0, 3.0)])
    assert c1 > c2
    c1, c2 = gain_interval(0.5, [Mode(0.6, 1.0)])
    assert math.isnan(c1) and math.isnan(c2)
    assert pick_gain(-1.0, 0.5) == pytest.approx(0.25)


def test_sl_is_tangent_lower_bound(scalar_cp):
    q, Q, g = scalar_cp.qfun, scalar_cp.Q, scalar_cp.gamma
    md = scalar_cp.modes[0]
    for c_lin in (0.1, 0.7, 2.0):
        np.testing.assert_allclose(build_Sl(1.3, c_lin, c_lin, md, q, Q, g), build_Sq(1.3, c_lin, md, q, Q, g))
        for c in (0.0, 0.4, 1.5):
            gap = build_Sq(1.3, c, md, q, Q, g) - build_Sl(1.3, c, c_lin, md, q, Q, g)
            assert is_psd(gap, margin=1e-12)


def test_convex_route_scalar(scalar_cp):
    res = solve_coupling_convex(scalar_cp)
    assert res.feasible
    assert res.c1 < res.c_star < res.c2
    assert post_check(scalar_cp, res.betas, res.c_star) >= -1e-7
    cert = certify_modes(SCALAR, list(scalar_cp.modes), scalar_cp.qfun.K, res.c_star, 1.0)
    assert cert.passed


def test_convex_concave_superset_of_convex(scalar_cp):
    # any convex certificate is a feasible start, so the iteration cannot lose it
    conv = solve_coupling_convex(scalar_cp)
    ccp = convex_concave_loop(scalar_cp, c0=conv.c_star)
    assert conv.feasible and ccp.feasible
    assert ccp.alpha >= 0


def test_gamma_zero_stops_after_one_iteration(ex3_problems):
    res = convex_concave_loop(ex3_problems[0.0])
    assert res.iterations == 1
    assert len(res.alpha_history) == 2
    assert res.alpha < 0
    assert res.verdict == sdp.Verdict.INFEASIBLE
    assert "stationary" in res.message


def test_example3_convex_route_infeasible_at_gamma_one(ex3_problems):
    assert solve_coupling_convex(ex3_problems[1.0]).verdict == sdp.Verdict.INFEASIBLE


@pytest.mark.parametrize("gamma", [1.0, 1000.0])
def test_alpha_sequence_monotone_and_certified(ex3, ex3_problems, gamma):
    cp_ = ex3_problems[gamma]
    res = convex_concave_loop(cp_)
    h = res.alpha_history
    assert all(b >= a - 1e-6 for a, b in zip(h, h[1:]))
    assert res.feasible
    assert post_check(cp_, res.betas, res.c_star) >= -1e-7
    cert = certify_modes(ex3.model, list(cp_.modes), cp_.qfun.K, res.c_star, 1.0)
    assert cert.passed


def test_shared_beta_is_more_conservative(ex3_problems):
    cp_ = ex3_problems[1.0]
    per_mode = convex_concave_loop(cp_)
    shared = convex_concave_loop(cp_, shared_beta=True)
    assert shared.alpha <= per_mode.alpha + 1e-6
    assert len(set(shared.betas)) == 1


def test_unstable_system_reports_stationary_point(unstable2):
    cp_ = _problem(unstable2.model, unstable2.graph, unstable2.Q, 1.0)
    res = convex_concave_loop(cp_)
    assert res.verdict == sdp.Verdict.INFEASIBLE
    assert res.alpha < 0


def test_max_beta_scalar_closed_form(scalar_cp):
    # [[q, b h12], [b h12, h22]] >= 0  <=>  b^2 <= q h22 / h12^2
    q = scalar_cp.qfun
    expect = math.sqrt(q.H22[0, 0] / q.H12[0, 0] ** 2)
    assert max_beta(q, np.eye(1)) == pytest.approx(min(expect, 10.0), rel=1e-5)


def test_problem_validation(scalar_cp):
    with pytest.raises(ModelError):
        CouplingProblem(scalar_cp.qfun, np.eye(1), 1.0, ())
    with pytest.raises(ModelError):
        CouplingProblem(scalar_cp.qfun, np.eye(1), 1.0, (Mode(-1.0, 1.0),))
    assert scalar_cp.eps == pytest.approx(2e-6)

"""Acceptance criteria; each test prints one PASS/FAIL line."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
from conftest import random_system

from qconsensus import sdp
from qconsensus.coupling import (
    CouplingProblem,
    build_Ni,
    convex_concave_loop,
    ni_scalar_test,
    post_check,
)
from qconsensus.data import check_excitation, collect_trajectory, solve_qfun_data
from qconsensus.errors import NotExciting
from qconsensus.graph import Mode, dedup_modes
from qconsensus.lqr import AgentModel, DesignConfig, check_controllable, solve_dare, solve_qfun_model
from qconsensus.numerics import is_psd
from qconsensus.pipeline import CouplingStrategy, Method, build_feasibility_table, design, verify_theorem7
from qconsensus.sim import SimConfig, certify_modes, decay_slope, run

Verdict = sdp.Verdict
GAMMAS = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]


def _report(capsys, k: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}")


def _controllable_random(rng, **kw) -> AgentModel:
    while True:
        am = AgentModel(*random_system(rng, **kw))
        if check_controllable(am):
            return am


def test_criterion1_feasibility_table(ex3, capsys):
    expected = {"Theorem6": "FFFIIII", "Algorithm1": "FFFFFFF", "Baseline": "IIIIFFF"}
    t0 = time.perf_counter()
    table = build_feasibility_table(
        ex3.model, ex3.graph, ex3.Q, ex3.mu, GAMMAS, [Method.THEOREM6, Method.ALGORITHM1, Method.BASELINE]
    )
    elapsed = time.perf_counter() - t0
    got = {m: table.pattern(m) for m in expected}
    ok = got == expected and not table.has_indeterminate() and elapsed < 300
    _report(capsys, 1, ok, f"got {got}, expected {expected}, {elapsed:.1f} s")
    assert not table.has_indeterminate()
    assert elapsed < 300
    assert got == expected


def test_criterion2_model_data_equivalence(ex1, ex3, capsys):
    cfg = DesignConfig(ex1.Q, 100.0, ex1.mu)
    Hm = solve_qfun_model(ex1.model, cfg).H
    Hd = solve_qfun_data(collect_trajectory(ex1.model, seed=0), cfg).H
    rel = float(np.linalg.norm(Hd - Hm) / np.linalg.norm(Hm))

    rng = np.random.default_rng(2024)
    mismatches, verdicts = [], []
    for trial in range(30):
        am = _controllable_random(rng)
        cfg_r = DesignConfig(np.eye(am.n), float(10 ** rng.uniform(-1, 2)), 1.0)
        batch = collect_trajectory(am, seed=trial)
        vm = design(am, ex3.graph, cfg_r, CouplingStrategy.CONVEX_CONCAVE).verdict
        vd = design(batch, ex3.graph, cfg_r, CouplingStrategy.CONVEX_CONCAVE, certify_with=am).verdict
        verdicts.append(vm)
        if vm != vd:
            mismatches.append((trial, vm.value, vd.value))
    ok = rel <= 1e-4 and not mismatches
    n_feas = sum(v == Verdict.FEASIBLE for v in verdicts)
    _report(capsys, 2, ok, f"rel H error {rel:.2e}; {len(mismatches)} verdict mismatches ({n_feas}/30 feasible)")
    assert rel <= 1e-4
    assert not mismatches


def test_criterion3_sdp_vs_riccati(capsys):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        am = _controllable_random(rng)
        g, mu = float(rng.uniform(0.1, 100)), float(rng.uniform(1.0, 1.5))
        q = solve_qfun_model(am, DesignConfig(np.eye(am.n), g, mu))
        Pd = solve_dare(am, np.eye(am.n), g, mu)
        worst = max(worst, float(np.linalg.norm(q.P - Pd) / (1 + np.linalg.norm(Pd))))
    p_scalar = solve_qfun_model(AgentModel([[1.1]], [[1.0]]), DesignConfig(np.eye(1), 1.0)).P[0, 0]
    ok = worst <= 1e-5 and abs(p_scalar - 1.77377) <= 1e-5
    _report(capsys, 3, ok, f"worst relative P error {worst:.2e}; scalar P = {p_scalar:.6f}")
    assert worst <= 1e-5
    assert p_scalar == pytest.approx(1.77377, abs=1e-5)


def _certify_and_simulate(rc):
    cfg = DesignConfig(rc.Q, rc.gamma, rc.mu)
    batch = collect_trajectory(rc.model, rc.data.length, rc.data.noise_std, rc.data.seed)
    rep = design(batch, rc.graph, cfg, rc.coupling_path, certify_with=rc.model)
    cert = certify_modes(rc.model, dedup_modes(rc.graph), rep.K, rep.c, rc.mu, cert_tol=1e-9)
    sim = SimConfig(rc.sim.steps, rep.K, rep.c, init_range=rc.sim.init_range, seed=rc.sim.seed,
                    switch_on_step=rc.sim.switch_on_step)
    slope = decay_slope(run(sim, rc.model, rc.graph))
    return rep, cert, slope


@pytest.mark.parametrize("name", ["example1", "example2"])
def test_criterion4_rate_certification(name, ex1, ex2, capsys):
    rc = {"example1": ex1, "example2": ex2}[name]
    rep, cert, slope = _certify_and_simulate(rc)
    bound = -math.log(rc.mu) + 0.05
    ok = rep.feasible and cert.passed and slope <= bound
    _report(
        capsys, 4, ok,
        f"[{name}] {rep.verdict.value}, max radius {cert.worst:.4f} < {1 / rc.mu:.4f}, slope {slope:.3f} <= {bound:.3f}",
    )
    assert rep.feasible
    assert cert.passed
    assert slope <= bound


def test_criterion5_algorithm1_closure(ex3, capsys):
    q = solve_qfun_model(ex3.model, DesignConfig(ex3.Q, 1000.0, ex3.mu))
    cp_ = CouplingProblem(q, ex3.Q, 1000.0, tuple(dedup_modes(ex3.graph)))
    res = convex_concave_loop(cp_)
    h = res.alpha_history
    monotone = all(b >= a - 1e-9 for a, b in zip(h, h[1:]))
    worst = post_check(cp_, res.betas, res.c_star)
    cert = certify_modes(ex3.model, list(cp_.modes), q.K, res.c_star, ex3.mu)
    ok = monotone and res.alpha >= 0 and worst >= -1e-7 and cert.passed
    _report(capsys, 5, ok, f"alpha {h}, post-check {worst:.2e}, max radius {cert.worst:.4f}")
    assert monotone
    assert res.alpha >= 0
    assert worst >= -1e-7
    assert cert.passed


def test_criterion6_gamma_monotonicity(unstable2, capsys):
    rng = np.random.default_rng(31)
    pairs = [(0.1, 1.0), (1.0, 10.0), (10.0, 100.0)]
    w_fail = 0
    for _ in range(20):
        am = _controllable_random(rng)
        rep = verify_theorem7(am, np.eye(am.n), 1.0, pairs)
        w_fail += sum(not p.w_monotone for p in rep.pairs)
    ur = verify_theorem7(unstable2.model, unstable2.Q, unstable2.mu, pairs)
    beta_ok = ur.strictly_unstable and all(p.beta_monotone for p in ur.pairs)
    table = build_feasibility_table(unstable2.model, unstable2.graph, unstable2.Q, unstable2.mu, GAMMAS,
                                    [Method.THEOREM6])
    cutoff = table.monotone_cutoff("Theorem6")
    ok = w_fail == 0 and beta_ok and cutoff
    betas = [p.beta1 for p in ur.pairs] + [ur.pairs[-1].beta2]
    _report(capsys, 6, ok, f"W failures {w_fail}; betas {np.round(betas, 4).tolist()}; "
                           f"Theorem6 column {table.pattern('Theorem6')}")
    assert w_fail == 0
    assert beta_ok
    assert cutoff


def test_criterion7_excitation(ex1, ex2, ex3, unstable2, capsys):
    problems = []
    for rc in (ex1, ex2, ex3, unstable2):
        zero = check_excitation(collect_trajectory(rc.model, 3 * (rc.model.n + rc.model.m), noise_std=0.0, seed=0))
        if zero.is_pe or zero.is_full_row_rank_D:
            problems.append(f"{rc.name}: zero input passed")
        full = sum(check_excitation(collect_trajectory(rc.model, seed=s)).is_full_row_rank_D for s in range(100))
        if full != 100:
            problems.append(f"{rc.name}: {full}/100 full-rank")
        tb = collect_trajectory(rc.model, noise_std=0.0, seed=0)
        try:
            solve_qfun_data(tb, DesignConfig(rc.Q, 1.0, rc.mu))
            problems.append(f"{rc.name}: rank-deficient data accepted")
        except NotExciting:
            pass
    _report(capsys, 7, not problems, "; ".join(problems) or "all fixtures")
    assert not problems


def test_criterion8_ni_brute_force(capsys):
    rng = np.random.default_rng(8)
    grid = np.round(np.arange(0, 2.0 + 1e-9, 0.01), 2)
    # exact ties occur on the grid (c = 0, beta = 1 gives 1 = beta^2), where the
    # smallest eigenvalue is zero up to roundoff; the PSD side uses a roundoff margin
    disagreements = 0
    for _ in range(20):
        r, th = rng.uniform(0.2, 3.0), rng.uniform(-1.5, 1.5)
        md = Mode(r * math.cos(th), r)
        for beta in grid:
            for c in grid:
                disagreements += is_psd(build_Ni(beta, c, md), margin=1e-12) != ni_scalar_test(beta, c, md)
    _report(capsys, 8, disagreements == 0, f"{disagreements} disagreements over 20 modes x {grid.size**2} grid points")
    assert disagreements == 0

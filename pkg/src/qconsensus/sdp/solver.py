"""Conic backend adapter and feasibility verdicts.

Problems are translated to cvxpy and solved with an interior-point solver
that produces infeasibility certificates (Clarabel by default). Any backend
cvxpy knows can be named instead; CVXOPT and SCS work as drop-ins.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
from numpy.typing import NDArray

from .problem import SdpProblem

log = logging.getLogger(__name__)

DEFAULT_BACKEND = "CLARABEL"


class SdpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    INACCURATE = "Inaccurate"
    FAILED = "Failed"


class Verdict(str, enum.Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class SolverTolerances:
    gap: float = 1e-8
    feas: float = 1e-8
    post_margin: float = 1e-7
    max_iter: int = 200


@dataclass
class SdpSolution:
    status: SdpStatus
    values: dict[str, NDArray[np.float64]] = field(default_factory=dict)
    objective_value: float = math.nan
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    block_min_eig: dict[str, float] = field(default_factory=dict)
    block_scale: dict[str, float] = field(default_factory=dict)
    backend: str = DEFAULT_BACKEND
    solve_time: float = math.nan

    def __post_init__(self) -> None:
        has_values = bool(self.values)
        if has_values != (self.status in (SdpStatus.OPTIMAL, SdpStatus.INACCURATE)):
            raise ValueError(f"values must be present iff status is Optimal/Inaccurate (status={self.status})")

    def scalar(self, name: str) -> float:
        return float(np.asarray(self.values[name]).reshape(-1)[0])

    def __getitem__(self, name: str) -> NDArray[np.float64]:
        return self.values[name]


_STATUS_MAP = {
    cp.OPTIMAL: SdpStatus.OPTIMAL,
    cp.OPTIMAL_INACCURATE: SdpStatus.INACCURATE,
    cp.INFEASIBLE: SdpStatus.INFEASIBLE,
    cp.UNBOUNDED: SdpStatus.UNBOUNDED,
}


def _solver_options(backend: str, tol: SolverTolerances) -> dict:
    if backend == "CLARABEL":
        return dict(
            tol_gap_abs=tol.gap,
            tol_gap_rel=tol.gap,
            tol_feas=tol.feas,
            tol_infeas_abs=tol.feas,
            tol_infeas_rel=tol.feas,
            max_iter=tol.max_iter,
        )
    if backend == "CVXOPT":
        return dict(abstol=tol.gap, reltol=tol.gap, feastol=tol.feas, max_iters=tol.max_iter)
    if backend == "SCS":
        return dict(eps_abs=tol.feas, eps_rel=tol.gap, max_iters=100 * tol.max_iter)
    return {}


def _to_cvxpy(p: SdpProblem):
    cvars = {v.name: cp.Variable(v.shape, symmetric=v.symmetric, name=v.name) for v in p.variables}
    constraints = []
    for b in p.blocks:
        k = b.size
        expr = b.constant
        for n, coef in b.coeffs.items():
            r, c = coef.shape[2:]
            # column-major vec of the variable matches coef[..., i, j] -> column i + j*r
            mat = coef.reshape(k * k, r, c).transpose(0, 2, 1).reshape(k * k, r * c)
            term = cp.reshape(mat @ cp.vec(cvars[n], order="F"), (k, k), order="C")
            expr = expr + term
        if k == 1:
            constraints.append(expr >= 0)
        else:
            constraints.append(0.5 * (expr + expr.T) >> 0)
    obj = p.objective.constant
    for n, coef in p.objective.coeffs.items():
        obj = obj + cp.sum(cp.multiply(coef, cvars[n]))
    if not isinstance(obj, cp.Expression):
        obj = cp.Constant(obj)
    goal = cp.Maximize(obj) if p.sense == "maximize" else cp.Minimize(obj)
    return cp.Problem(goal, constraints), cvars, constraints


def solve(p: SdpProblem, tol: SolverTolerances | None = None, backend: str = DEFAULT_BACKEND) -> SdpSolution:
    """Solve ``p``; never raises on solver trouble, the status says what happened."""
    tol = tol or SolverTolerances()
    prob, cvars, constraints = _to_cvxpy(p)
    try:
        with warnings.catch_warnings():
            # inaccurate solutions are reported through the status instead
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver=backend, **_solver_options(backend, tol))
    except (cp.SolverError, ArithmeticError, ValueError) as exc:
        log.warning("backend %s failed: %s", backend, exc)
        return SdpSolution(SdpStatus.FAILED, backend=backend)
    status = _STATUS_MAP.get(prob.status, SdpStatus.FAILED)
    stime = prob.solver_stats.solve_time if prob.solver_stats else math.nan
    if status not in (SdpStatus.OPTIMAL, SdpStatus.INACCURATE):
        return SdpSolution(status, backend=backend, solve_time=stime or math.nan)
    values = {}
    for v in p.variables:
        val = cvars[v.name].value
        if val is None:
            return SdpSolution(SdpStatus.FAILED, backend=backend)
        val = np.asarray(val, dtype=np.float64).reshape(v.shape)
        if v.symmetric:
            val = 0.5 * (val + val.T)
        values[v.name] = val
    min_eigs, scales = {}, {}
    for b in p.blocks:
        M = b.evaluate(values)
        min_eigs[b.name] = float(np.linalg.eigvalsh(M)[0])
        scales[b.name] = float(np.max(np.abs(M)))
    dual_res = 0.0
    for con in constraints:
        dv = con.dual_value
        if dv is None:
            continue
        dv = np.atleast_2d(np.asarray(dv, dtype=np.float64))
        lo = float(np.linalg.eigvalsh(0.5 * (dv + dv.T))[0]) if dv.shape[0] == dv.shape[1] else float(dv.min())
        dual_res = max(dual_res, -lo)
    primal_res = max([0.0] + [-min_eigs[k] / (1.0 + scales[k]) for k in min_eigs])
    return SdpSolution(
        status=status,
        values=values,
        objective_value=p.objective.evaluate(values),
        primal_residual=primal_res,
        dual_residual=dual_res,
        block_min_eig=min_eigs,
        block_scale=scales,
        backend=backend,
        solve_time=stime if stime is not None else math.nan,
    )


def feasibility_verdict(
    s: SdpSolution,
    strict_margin: float | None = None,
    tol: SolverTolerances | None = None,
) -> Verdict:
    """Map a solution to Feasible / Infeasible / Indeterminate.

    Infeasible requires a backend certificate; anything else that is not a
    clean, post-checked optimum is Indeterminate. The post-check margin is
    relative: a block passes when its smallest eigenvalue is at least
    ``-margin * (1 + max|entry|)``, matching the relative stopping rules of
    interior-point backends.
    """
    tol = tol or SolverTolerances()
    margin = tol.post_margin if strict_margin is None else strict_margin
    if s.status == SdpStatus.INFEASIBLE:
        return Verdict.INFEASIBLE
    accepted = s.status == SdpStatus.OPTIMAL or (
        s.status == SdpStatus.INACCURATE and s.primal_residual <= 10 * tol.feas
    )
    if not accepted:
        return Verdict.INDETERMINATE
    if any(e < -margin * (1.0 + s.block_scale.get(k, 0.0)) for k, e in s.block_min_eig.items()):
        return Verdict.INDETERMINATE
    return Verdict.FEASIBLE

"""Coupling-gain design.

Two routes are offered. The direct route solves a single convex program in
(beta, c_hat) and takes the midpoint of the resulting interval of admissible
coupling gains. It drops a PSD term that grows with gamma, so it is
conservative. The convex-concave route keeps that term and linearizes its
only concave part (c^2) around the current iterate, which yields a monotone
sequence of SDPs.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from . import sdp
from .errors import DegenerateInterval, ModelError, SolverFailure
from .graph import Mode
from .lqr import QFunction
from .numerics import min_eigenvalue

log = logging.getLogger(__name__)

BETA_CAP = 10.0
C_MIN = 1e-9
WIDTH_MIN = 1e-10
CCP_EPS = 1e-7
CCP_MAX_OUTER = 200
MONOTONE_SLACK = 1e-9


class CouplingPath(str, enum.Enum):
    CONVEX_DIRECT = "ConvexDirect"
    CONVEX_CONCAVE = "ConvexConcave"


@dataclass(frozen=True)
class CouplingProblem:
    qfun: QFunction
    Q: NDArray[np.float64]
    gamma: float
    modes: tuple[Mode, ...]
    eps: float = math.nan

    def __post_init__(self) -> None:
        Q = np.atleast_2d(np.asarray(self.Q, dtype=np.float64))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "modes", tuple(Mode(float(r), float(a)) for r, a in self.modes))
        if not self.modes:
            raise ModelError("coupling design needs at least one nonzero mode")
        if any(md.re <= 0 or md.abs <= 0 for md in self.modes):
            raise ModelError("every mode needs Re(lambda) > 0")
        if min_eigenvalue(self.qfun.H22) <= 0:
            raise ModelError("H22 must be positive definite")
        if math.isnan(self.eps):
            object.__setattr__(self, "eps", 1e-6 * (1.0 + float(np.linalg.norm(Q, 2))))


@dataclass
class CouplingResult:
    verdict: sdp.Verdict
    path: CouplingPath
    c_star: float = math.nan
    beta: float = math.nan
    betas: tuple[float, ...] = ()
    c_hat: float = math.nan
    c1: float = math.nan
    c2: float = math.nan
    alpha: float | None = None
    alpha_history: list[float] = field(default_factory=list)
    iterations: int = 0
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.verdict == sdp.Verdict.FEASIBLE


def build_Ni(beta, c_hat, mode: Mode):
    """2x2 block whose PSD-ness encodes |1 - c_hat*lambda| <= beta and beta >= s.

    Works with plain floats and with the dict-of-arrays probes used by
    :func:`sdp.affine_block`.
    """
    re, ab = mode
    if ab <= 0:
        raise ModelError("build_Ni called with the zero eigenvalue")
    s = math.sqrt(max(0.0, 1.0 - (re / ab) ** 2))
    t = (c_hat * ab**2 - re) / ab
    return np.array([[beta - s, t], [t, beta + s]], dtype=np.float64)


def ni_scalar_test(beta: float, c_hat: float, mode: Mode) -> bool:
    """Scalar form of ``build_Ni(...) >= 0``."""
    re, ab = mode
    s = math.sqrt(max(0.0, 1.0 - (re / ab) ** 2))
    return (1 - 2 * c_hat * re + c_hat**2 * ab**2 <= beta**2) and beta >= s


def _kk(qfun: QFunction) -> NDArray[np.float64]:
    # H12 H22^-2 H12' = K'K
    K = qfun.K
    return K.T @ K


def build_Sq(beta, c, mode: Mode, qfun: QFunction, Q, gamma: float) -> NDArray[np.float64]:
    """Coupling block with the exact quadratic term in c."""
    return _s_block(beta, c * c, mode, qfun, Q, gamma)


def build_Sl(beta, c, c_lin, mode: Mode, qfun: QFunction, Q, gamma: float) -> NDArray[np.float64]:
    """``build_Sq`` with c^2 replaced by its tangent ``2*c_lin*c - c_lin^2``.

    Equals Sq at ``c = c_lin`` and lower-bounds it elsewhere.
    """
    return _s_block(beta, 2 * c_lin * c - c_lin * c_lin, mode, qfun, Q, gamma)


def _s_block(beta, cc, mode: Mode, qfun: QFunction, Q, gamma: float) -> NDArray[np.float64]:
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    top = Q + cc * gamma * mode.abs**2 * _kk(qfun)
    off = beta * qfun.H12
    return np.block([[top, off], [off.T, qfun.H22]])


def gain_interval(beta: float, modes: Sequence[Mode]) -> tuple[float, float]:
    """Intersection over modes of the c-intervals where |1 - c*lambda| <= beta."""
    lo, hi = -math.inf, math.inf
    for re, ab in modes:
        disc = re**2 - ab**2 * (1 - beta**2)
        if disc < 0:
            return math.nan, math.nan
        r = math.sqrt(disc)
        lo = max(lo, (re - r) / ab**2)
        hi = min(hi, (re + r) / ab**2)
    return lo, hi


def pick_gain(c1: float, c2: float, c_min: float = C_MIN) -> float:
    mid = 0.5 * (c1 + c2)
    return mid if mid > c_min else max(mid, 0.5 * (c_min + c2))


def _coupling_lmi(cp_: CouplingProblem, beta_name: str):
    n = cp_.qfun.n
    Qe = cp_.Q - cp_.eps * np.eye(n)
    H12, H22 = cp_.qfun.H12, cp_.qfun.H22

    def fn(v):
        b = v[beta_name][0, 0]
        return np.block([[Qe, b * H12], [b * H12.T, H22]])

    return fn


def solve_coupling_convex(
    cp_: CouplingProblem,
    tol: sdp.SolverTolerances | None = None,
    backend: str = sdp.DEFAULT_BACKEND,
) -> CouplingResult:
    """Maximize beta subject to the gamma-free coupling LMI and every N_i."""
    tol = tol or sdp.SolverTolerances()
    b, ch = sdp.scalar("beta"), sdp.scalar("c_hat")
    vars_ = [b, ch]
    blocks = [
        sdp.affine_block("beta_nonneg", lambda v: v["beta"], vars_),
        sdp.affine_block("beta_cap", lambda v: BETA_CAP - v["beta"], vars_),
        sdp.affine_block("coupling", _coupling_lmi(cp_, "beta"), vars_),
    ]
    for i, md in enumerate(cp_.modes):
        blocks.append(
            sdp.affine_block(f"N_{i}", lambda v, md=md: build_Ni(v["beta"][0, 0], v["c_hat"][0, 0], md), vars_)
        )
    p = sdp.SdpProblem(tuple(vars_), tuple(blocks), sdp.linear_objective(lambda v: v["beta"][0, 0], vars_))
    sol = sdp.solve(p, tol, backend)
    verdict = sdp.feasibility_verdict(sol, tol=tol)
    if verdict != sdp.Verdict.FEASIBLE:
        return CouplingResult(verdict, CouplingPath.CONVEX_DIRECT, message=f"convex program: {sol.status.value}")
    beta, c_hat = sol.scalar("beta"), sol.scalar("c_hat")
    c1, c2 = gain_interval(beta, cp_.modes)
    if not (c2 - c1 >= WIDTH_MIN):
        raise DegenerateInterval(f"coupling interval [{c1:.6g}, {c2:.6g}] is degenerate at beta = {beta:.6g}")
    c_star = pick_gain(c1, c2)
    res = CouplingResult(
        verdict, CouplingPath.CONVEX_DIRECT, c_star=c_star, beta=beta,
        betas=(beta,) * len(cp_.modes), c_hat=c_hat, c1=c1, c2=c2,
    )
    bad = [md for md in cp_.modes if not (1 - 2 * c_star * md.re + c_star**2 * md.abs**2 < beta**2)]
    if bad:
        res.verdict = sdp.Verdict.INDETERMINATE
        res.message = f"midpoint gain fails the modewise check for {len(bad)} mode(s)"
    return res


def post_check(cp_: CouplingProblem, betas: Sequence[float], c: float, tol: float = 1e-7) -> float:
    """Smallest eigenvalue over every Sq_i and N_i at (betas, c), scaled by block size."""
    worst = math.inf
    for b, md in zip(betas, cp_.modes):
        Sq = build_Sq(b, c, md, cp_.qfun, cp_.Q, cp_.gamma)
        Ni = build_Ni(b, c, md)
        worst = min(
            worst,
            min_eigenvalue(Sq) / (1 + np.max(np.abs(Sq))),
            min_eigenvalue(Ni) / (1 + np.max(np.abs(Ni))),
        )
    return worst


def _ccp_subproblem(cp_: CouplingProblem, c_lin: float, shared_beta: bool) -> sdp.SdpProblem:
    n_modes = len(cp_.modes)
    bnames = ["beta"] if shared_beta else [f"beta_{i}" for i in range(n_modes)]
    vars_ = [sdp.scalar("alpha"), sdp.scalar("c")] + [sdp.scalar(nm) for nm in bnames]
    qe = cp_.Q - cp_.eps * np.eye(cp_.qfun.n)
    blocks = [sdp.affine_block("c_min", lambda v: v["c"] - C_MIN, vars_)]
    for nm in bnames:
        blocks.append(sdp.affine_block(f"{nm}_nonneg", lambda v, nm=nm: v[nm], vars_))
        blocks.append(sdp.affine_block(f"{nm}_cap", lambda v, nm=nm: BETA_CAP - v[nm], vars_))
    for i, md in enumerate(cp_.modes):
        bn = bnames[0] if shared_beta else bnames[i]

        def sl(v, md=md, bn=bn):
            S = build_Sl(v[bn][0, 0], v["c"][0, 0], c_lin, md, cp_.qfun, qe, cp_.gamma)
            return S - v["alpha"][0, 0] * np.eye(S.shape[0])

        blocks.append(sdp.affine_block(f"Sl_{i}", sl, vars_))
        blocks.append(
            sdp.affine_block(f"N_{i}", lambda v, md=md, bn=bn: build_Ni(v[bn][0, 0], v["c"][0, 0], md), vars_)
        )
    obj = sdp.linear_objective(lambda v: v["alpha"][0, 0], vars_)
    return sdp.SdpProblem(tuple(vars_), tuple(blocks), obj)


def initial_gain(cp_: CouplingProblem, tol: sdp.SolverTolerances | None = None) -> float:
    """Midpoint of the convex interval when available, else the mean per-mode minimizer."""
    try:
        res = solve_coupling_convex(cp_, tol)
        if res.feasible:
            return res.c_star
    except DegenerateInterval:
        pass
    return float(np.mean([md.re / md.abs**2 for md in cp_.modes]))


def convex_concave_loop(
    cp_: CouplingProblem,
    c0: float | None = None,
    eps: float = CCP_EPS,
    max_outer: int = CCP_MAX_OUTER,
    shared_beta: bool = False,
    tol: sdp.SolverTolerances | None = None,
    backend: str = sdp.DEFAULT_BACKEND,
) -> CouplingResult:
    """Successive linearization in c, maximizing the common PSD margin alpha.

    By default every mode gets its own beta_i. The block pair (Sq_i, N_i)
    then encodes exactly the modewise Lyapunov decrease condition, whereas
    one shared beta couples the modes and is strictly more conservative.
    Pass ``shared_beta=True`` for that single-beta variant.

    A final alpha < 0 means the iteration stalled at a stationary point
    without a certificate; it is reported as Infeasible together with alpha.
    """
    tol = tol or sdp.SolverTolerances()
    c_k = initial_gain(cp_, tol) if c0 is None else float(c0)
    alpha_p = -math.inf
    history: list[float] = []
    sol = None
    for k in range(max_outer):
        p = _ccp_subproblem(cp_, c_k, shared_beta)
        sol = sdp.solve(p, tol, backend)
        if sdp.feasibility_verdict(sol, tol=tol) != sdp.Verdict.FEASIBLE:
            raise SolverFailure(
                f"convex-concave iteration {k} ended with status {sol.status.value}",
                problem_dump=sdp.dumps(p),
                status=sol.status.value,
            )
        alpha = sol.scalar("alpha")
        history.append(alpha)
        c_k = sol.scalar("c")
        if abs(alpha - alpha_p) <= eps:
            break
        alpha_p = alpha
    else:
        return CouplingResult(
            sdp.Verdict.INDETERMINATE, CouplingPath.CONVEX_CONCAVE, c_star=c_k,
            alpha=history[-1], alpha_history=history, iterations=max_outer,
            message=f"no convergence within {max_outer} iterations",
        )
    n_modes = len(cp_.modes)
    betas = (sol.scalar("beta"),) * n_modes if shared_beta else tuple(sol.scalar(f"beta_{i}") for i in range(n_modes))
    alpha = history[-1]
    res = CouplingResult(
        sdp.Verdict.FEASIBLE, CouplingPath.CONVEX_CONCAVE, c_star=c_k, beta=max(betas), betas=betas,
        alpha=alpha, alpha_history=history, iterations=len(history) - 1,
    )
    if alpha < 0:
        res.verdict = sdp.Verdict.INFEASIBLE
        res.message = f"stationary point with alpha = {alpha:.4g} < 0"
        return res
    worst = post_check(cp_, betas, c_k)
    if worst < -tol.post_margin:
        res.verdict = sdp.Verdict.INDETERMINATE
        res.message = f"post-check failed (min scaled eigenvalue {worst:.3e})"
    return res


def max_beta(
    qfun: QFunction,
    Q,
    eps: float = 0.0,
    tol: sdp.SolverTolerances | None = None,
    backend: str = sdp.DEFAULT_BACKEND,
) -> float:
    """Largest beta in [0, BETA_CAP] allowed by the coupling LMI alone (no graph)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    Qe = Q - eps * np.eye(Q.shape[0])
    b = sdp.scalar("beta")

    def lmi(v):
        bb = v["beta"][0, 0]
        return np.block([[Qe, bb * qfun.H12], [bb * qfun.H12.T, qfun.H22]])

    p = sdp.SdpProblem(
        (b,),
        (
            sdp.affine_block("beta_nonneg", lambda v: v["beta"], [b]),
            sdp.affine_block("beta_cap", lambda v: BETA_CAP - v["beta"], [b]),
            sdp.affine_block("coupling", lmi, [b]),
        ),
        sdp.linear_objective(lambda v: v["beta"][0, 0], [b]),
    )
    sol = sdp.solve(p, tol, backend)
    if sdp.feasibility_verdict(sol, tol=tol) != sdp.Verdict.FEASIBLE:
        raise SolverFailure(f"beta bound program ended with status {sol.status.value}", sdp.dumps(p), sol.status.value)
    return sol.scalar("beta")

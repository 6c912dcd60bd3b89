"""Synthetic LQR layer: Riccati oracle and the Q-function SDP.

The Q-function of the rate-scaled LQR problem is the quadratic form
``[x; u]^T H [x; u]``. Its blocks yield the local gain ``K = H22^-1 H12^T``
and the Lyapunov candidate ``P = H11 - H12 H22^-1 H12^T``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from . import sdp
from .errors import ModelError, NonConvergence, SdpInfeasible, SolverFailure
from .numerics import is_psd, min_eigenvalue, numerical_rank

log = logging.getLogger(__name__)

H22_MIN_EIG = 1e-8


@dataclass(frozen=True)
class AgentModel:
    A: NDArray[np.float64]
    B: NDArray[np.float64]

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        B = np.asarray(self.B, dtype=np.float64)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1]:
            raise ModelError(f"A must be square, got {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ModelError(f"B has shape {B.shape}, expected ({A.shape[0]}, m)")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ModelError("A or B has non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def AB(self) -> NDArray[np.float64]:
        return np.hstack([self.A, self.B])


@dataclass(frozen=True)
class DesignConfig:
    """State weight Q, control weight R = gamma*I and consensus rate mu."""

    Q: NDArray[np.float64]
    gamma: float
    mu: float = 1.0

    def __post_init__(self) -> None:
        Q = np.atleast_2d(np.asarray(self.Q, dtype=np.float64))
        if not is_psd(Q, margin=1e-12):
            raise ModelError("Q must be symmetric positive semidefinite")
        if not (self.gamma >= 0 and np.isfinite(self.gamma)):
            raise ModelError(f"gamma must be >= 0, got {self.gamma}")
        if not (self.mu >= 1 and np.isfinite(self.mu)):
            raise ModelError(f"mu must be >= 1, got {self.mu}")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def strict_margin(self) -> float:
        """Margin used to turn strict LMIs into closed-cone constraints."""
        return 1e-6 * (1.0 + float(np.linalg.norm(self.Q, 2)))


@dataclass(frozen=True)
class QFunction:
    H: NDArray[np.float64]
    W: NDArray[np.float64]
    n: int
    m: int
    stats: dict = field(default_factory=dict, compare=False)

    @property
    def H11(self) -> NDArray[np.float64]:
        return self.H[: self.n, : self.n]

    @property
    def H12(self) -> NDArray[np.float64]:
        return self.H[: self.n, self.n :]

    @property
    def H22(self) -> NDArray[np.float64]:
        return self.H[self.n :, self.n :]

    @property
    def K(self) -> NDArray[np.float64]:
        return np.linalg.solve(self.H22, self.H12.T)

    @property
    def P(self) -> NDArray[np.float64]:
        P = self.H11 - self.H12 @ np.linalg.solve(self.H22, self.H12.T)
        return 0.5 * (P + P.T)

    def identity_residuals(self, am: AgentModel, cfg: DesignConfig) -> tuple[float, float]:
        """Relative Frobenius residuals of H12 = mu^2 A'PB and H22 = gamma I + mu^2 B'PB."""
        P, mu2 = self.P, cfg.mu**2
        r12 = np.linalg.norm(self.H12 - mu2 * am.A.T @ P @ am.B)
        r22 = np.linalg.norm(self.H22 - cfg.gamma * np.eye(self.m) - mu2 * am.B.T @ P @ am.B)
        return (
            float(r12 / (1 + np.linalg.norm(self.H12))),
            float(r22 / (1 + np.linalg.norm(self.H22))),
        )


def controllability_matrix(A: ArrayLike, B: ArrayLike) -> NDArray[np.float64]:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def check_controllable(am: AgentModel) -> bool:
    return numerical_rank(controllability_matrix(am.A, am.B)) == am.n


def check_observable(A: ArrayLike, Q: ArrayLike) -> bool:
    """Observability of (A, Q^{1/2}) via the dual controllability test."""
    Q = np.asarray(Q, dtype=np.float64)
    C = np.real(scipy.linalg.sqrtm(0.5 * (Q + Q.T)))
    A = np.asarray(A, dtype=np.float64)
    return numerical_rank(controllability_matrix(A.T, C.T)) == A.shape[0]


def dare_iterate(
    am: AgentModel,
    cfg: DesignConfig,
    max_iters: int = 10000,
    tol: float = 1e-12,
) -> NDArray[np.float64]:
    """Value iteration on the mu-scaled Riccati map, started from P = 0.

    Only meant as a test oracle; needs gamma > 0.
    """
    if cfg.gamma <= 0:
        raise ModelError("Riccati oracle needs gamma > 0")
    A, B = cfg.mu * am.A, cfg.mu * am.B
    R = cfg.gamma * np.eye(am.m)
    P = np.zeros((am.n, am.n))
    for _ in range(max_iters):
        BtP = B.T @ P
        Pn = A.T @ (P - BtP.T @ np.linalg.solve(BtP @ B + R, BtP)) @ A + cfg.Q
        Pn = 0.5 * (Pn + Pn.T)
        if not np.all(np.isfinite(Pn)):
            break
        # max-abs norms: Frobenius would overflow to inf first and fake convergence
        if np.abs(Pn - P).max() <= tol * (1 + np.abs(P).max()):
            return Pn
        P = Pn
    raise NonConvergence(
        f"Riccati iteration did not converge in {max_iters} steps; "
        "the scaled pair may not be stabilizable or (A, Q^1/2) not detectable"
    )


def solve_dare(am: AgentModel, Q: ArrayLike, gamma: float, mu: float = 1.0) -> NDArray[np.float64]:
    """Stabilizing DARE solution via scipy, with value iteration as fallback."""
    cfg = DesignConfig(np.asarray(Q), gamma, mu)
    try:
        P = scipy.linalg.solve_discrete_are(mu * am.A, mu * am.B, cfg.Q, gamma * np.eye(am.m))
        if np.all(np.isfinite(P)):
            return 0.5 * (P + P.T)
    except (np.linalg.LinAlgError, ValueError) as exc:
        log.info("solve_discrete_are failed (%s), falling back to iteration", exc)
    return dare_iterate(am, cfg)


def qfun_problem(
    Q: NDArray[np.float64],
    gamma: float,
    mu: float,
    Z: NDArray[np.float64],
    Y: NDArray[np.float64],
    canonical: bool = True,
) -> sdp.SdpProblem:
    """Q-function SDP on generic data.

    ``Z`` holds state-action columns and ``Y`` the matching successor
    states (``Y = [A B] Z``). The model-based program uses ``Z = I`` and
    ``Y = [A B]``; the data-driven one uses the trajectory matrices.

    The optimal face of ``maximize trace(W)`` contains every H of the form
    ``H* - E Delta E^T`` that shares P and K with the true Q-function H*.
    H* is the Loewner-largest feasible H, so ``canonical`` adds trace(H)
    to the objective to single it out.
    """
    n = Q.shape[0]
    nm = Z.shape[0]
    m = nm - n
    Hv = sdp.symmetric("H", nm)
    Wv = sdp.symmetric("W", n)
    cost = scipy.linalg.block_diag(Q, gamma * np.eye(m))
    ZcZ = Z.T @ cost @ Z

    def schur(v):
        H = v["H"]
        return np.block([[H[:n, :n] - v["W"], H[:n, n:]], [H[n:, :n], H[n:, n:]]])

    def bellman(v):
        H = v["H"]
        H11, H12, H22 = H[:n, :n], H[:n, n:], H[n:, n:]
        top = mu**2 * Y.T @ H11 @ Y - Z.T @ H @ Z + ZcZ
        off = mu * Y.T @ H12
        return np.block([[top, off], [off.T, H22]])

    blocks = (
        sdp.affine_block("schur", schur, [Hv, Wv]),
        sdp.affine_block("bellman", bellman, [Hv, Wv]),
    )
    if canonical:
        obj = sdp.linear_objective(lambda v: np.trace(v["W"]) + np.trace(v["H"]), [Hv, Wv])
    else:
        obj = sdp.linear_objective(lambda v: np.trace(v["W"]), [Hv, Wv])
    return sdp.SdpProblem((Hv, Wv), blocks, obj, "maximize")


def qfun_from_solution(
    p: sdp.SdpProblem,
    sol: sdp.SdpSolution,
    n: int,
    tol: sdp.SolverTolerances,
) -> QFunction:
    verdict = sdp.feasibility_verdict(sol, tol=tol)
    if verdict == sdp.Verdict.INFEASIBLE:
        raise SdpInfeasible("Q-function SDP certified infeasible", problem_dump=sdp.dumps(p))
    if verdict != sdp.Verdict.FEASIBLE:
        raise SolverFailure(
            f"Q-function SDP ended with status {sol.status.value}",
            problem_dump=sdp.dumps(p),
            status=sol.status.value,
        )
    H, W = sol["H"], sol["W"]
    m = H.shape[0] - n
    if min_eigenvalue(H[n:, n:]) < H22_MIN_EIG:
        raise ModelError(
            f"H22 is not positive definite after solve (min eig {min_eigenvalue(H[n:, n:]):.2e}); "
            "with gamma = 0 this happens when B P B' is singular"
        )
    stats = {
        "status": sol.status.value,
        "objective": sol.objective_value,
        "block_min_eig": dict(sol.block_min_eig),
        "solve_time": sol.solve_time,
    }
    return QFunction(H, W, n, m, stats)


def solve_qfun_model(
    am: AgentModel,
    cfg: DesignConfig,
    tol: sdp.SolverTolerances | None = None,
    canonical: bool = True,
    backend: str = sdp.DEFAULT_BACKEND,
) -> QFunction:
    """Model-based Q-function SDP for the rate-scaled LQR problem."""
    if cfg.n != am.n:
        raise ModelError(f"Q is {cfg.n}x{cfg.n} but the model has n = {am.n}")
    if not check_controllable(am):
        raise ModelError("(A, B) is not controllable")
    if not check_observable(am.A, cfg.Q):
        warnings.warn("(A, Q^1/2) is not observable; uniqueness of the Q-function is not guaranteed", stacklevel=2)
    tol = tol or sdp.SolverTolerances()
    p = qfun_problem(cfg.Q, cfg.gamma, cfg.mu, np.eye(am.n + am.m), am.AB, canonical)
    sol = sdp.solve(p, tol, backend)
    return qfun_from_solution(p, sol, am.n, tol)

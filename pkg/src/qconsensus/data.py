"""Input-state trajectory data and the model-free Q-function SDP."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import sdp
from .errors import ModelError, NotExciting, TrajectoryOverflow
from .lqr import AgentModel, DesignConfig, QFunction, qfun_from_solution, qfun_problem
from .numerics import numerical_rank

OVERFLOW_BOUND = 1e9
X0_RANGE = (0.0, 10.0)

Policy = Callable[[NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """States x(k0..k0+l) and inputs u(k0..k0+l-1) of one agent.

    ``states`` is (l+1) x n and ``inputs`` is l x m, one sample per row.
    """

    agent_id: int
    k0: int
    states: NDArray[np.float64]
    inputs: NDArray[np.float64]

    def __post_init__(self) -> None:
        x = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        u = np.asarray(self.inputs, dtype=np.float64)
        if u.ndim == 1:
            u = u.reshape(-1, 1)
        if x.shape[0] != u.shape[0] + 1:
            raise ModelError(f"need one more state than inputs, got {x.shape[0]} states and {u.shape[0]} inputs")
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "inputs", u)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrajectoryBatch):
            return NotImplemented
        return (
            self.agent_id == other.agent_id
            and self.k0 == other.k0
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.inputs, other.inputs)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def length(self) -> int:
        return self.inputs.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def D(self) -> NDArray[np.float64]:
        """(n+m) x l; column t stacks x(k0+t) over u(k0+t)."""
        return np.vstack([self.states[:-1].T, self.inputs.T])

    @property
    def X(self) -> NDArray[np.float64]:
        """n x l; column t is x(k0+t+1)."""
        return self.states[1:].T.copy()

    def to_csv(self, path: str | Path | None = None) -> str:
        """Columns ``k, x_1..x_n, u_1..u_m``; the terminal row has empty inputs."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k"] + [f"x_{i + 1}" for i in range(self.n)] + [f"u_{i + 1}" for i in range(self.m)])
        for t in range(self.length + 1):
            u = [repr(float(v)) for v in self.inputs[t]] if t < self.length else [""] * self.m
            w.writerow([self.k0 + t] + [repr(float(v)) for v in self.states[t]] + u)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, path: str | Path, agent_id: int = 0) -> TrajectoryBatch:
        return cls.parse_csv(Path(path).read_text(encoding="utf-8"), agent_id)

    @classmethod
    def parse_csv(cls, text: str, agent_id: int = 0) -> TrajectoryBatch:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ModelError("empty trajectory CSV")
        header = rows[0]
        n = sum(h.startswith("x_") for h in header)
        m = sum(h.startswith("u_") for h in header)
        if header[0] != "k" or n + m + 1 != len(header):
            raise ModelError(f"bad trajectory CSV header: {header}")
        body = rows[1:]
        ks = [int(r[0]) for r in body]
        if ks != list(range(ks[0], ks[0] + len(ks))):
            raise ModelError("trajectory CSV steps must be consecutive")
        states = np.array([[float(v) for v in r[1 : 1 + n]] for r in body])
        inputs = np.array([[float(v) for v in r[1 + n :]] for r in body[:-1]]).reshape(-1, m)
        return cls(agent_id, ks[0], states, inputs)


def collect_trajectory(
    am: AgentModel,
    length: int | None = None,
    noise_std: float = 1.0,
    seed: int | None = None,
    base_policy: Policy | None = None,
    x0: ArrayLike | None = None,
    agent_id: int = 0,
    k0: int = 0,
    overflow_bound: float = OVERFLOW_BOUND,
) -> TrajectoryBatch:
    """Simulate ``x+ = A x + B u`` under ``u = base_policy(x) + noise``.

    The default is zero base policy, unit Gaussian probing noise, the
    minimal length n+m and an initial state drawn uniformly from [0, 10].
    """
    n, m = am.n, am.m
    length = n + m if length is None else int(length)
    if length < n + m:
        raise ModelError(f"length {length} is below the minimum n+m = {n + m}")
    if noise_std < 0:
        raise ModelError("noise_std must be nonnegative")
    rng = np.random.default_rng(seed)
    x = rng.uniform(*X0_RANGE, size=n) if x0 is None else np.asarray(x0, dtype=np.float64).reshape(n)
    states = np.empty((length + 1, n))
    inputs = np.empty((length, m))
    states[0] = x
    for t in range(length):
        u = np.zeros(m) if base_policy is None else np.asarray(base_policy(x), dtype=np.float64).reshape(m)
        u = u + noise_std * rng.standard_normal(m)
        x = am.A @ x + am.B @ u
        if not np.all(np.abs(x) <= overflow_bound):
            raise TrajectoryOverflow(
                f"state exceeded {overflow_bound:.0e} at step {k0 + t + 1}; "
                "use a shorter batch or a stabilizing base policy"
            )
        inputs[t] = u
        states[t + 1] = x
    return TrajectoryBatch(agent_id, k0, states, inputs)


def hankel(u: ArrayLike, L: int) -> NDArray[np.float64]:
    """Block-Hankel matrix of depth L; ``u`` has one sample per row."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        u = u.reshape(-1, 1)
    l, m = u.shape
    if L < 1 or l < L:
        raise ValueError(f"Hankel depth {L} needs at least {L} samples, got {l}")
    cols = l - L + 1
    return np.vstack([u[i : i + cols].T for i in range(L)]).reshape(m * L, cols)


@dataclass(frozen=True)
class ExcitationReport:
    hankel_order: int
    hankel_rank: int
    d_rank: int
    is_pe: bool
    is_full_row_rank_D: bool


def check_excitation(tb: TrajectoryBatch, L: int | None = None) -> ExcitationReport:
    """Hankel PE test of order L (default n+1) alongside the row-rank test on D.

    Only the D test gates the SDP; the Hankel test is informational.
    """
    L = tb.n + 1 if L is None else int(L)
    Hk = hankel(tb.inputs, L)
    h_rank = numerical_rank(Hk)
    d_rank = numerical_rank(tb.D)
    return ExcitationReport(L, h_rank, d_rank, h_rank == tb.m * L, d_rank == tb.n + tb.m)


def pool_batches(batches: Sequence[TrajectoryBatch]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Column-concatenate (D, X) over several agents' batches."""
    if not batches:
        raise ModelError("no trajectory batches given")
    if len({(b.n, b.m) for b in batches}) != 1:
        raise ModelError("batches have mismatched dimensions")
    return np.hstack([b.D for b in batches]), np.hstack([b.X for b in batches])


def solve_qfun_data(
    data: TrajectoryBatch | Sequence[TrajectoryBatch],
    cfg: DesignConfig,
    tol: sdp.SolverTolerances | None = None,
    canonical: bool = True,
    backend: str = sdp.DEFAULT_BACKEND,
) -> QFunction:
    """Q-function SDP built from trajectory data alone.

    Only D, X and the design weights enter; no model is consulted. When
    more than n+m columns are available the data is first compressed onto
    the row space of D, which is a congruence and leaves the feasible set
    unchanged while keeping the LMI at size n+2m.
    """
    batches = [data] if isinstance(data, TrajectoryBatch) else list(data)
    D, X = pool_batches(batches)
    n = cfg.n
    if X.shape[0] != n or D.shape[0] <= n:
        raise ModelError(f"data dimensions {D.shape}/{X.shape} do not match Q of size {n}")
    nm = D.shape[0]
    if numerical_rank(D) < nm:
        raise NotExciting(f"D has rank {numerical_rank(D)} < n+m = {nm}; the input is not exciting enough")
    if D.shape[1] > nm:
        _, _, Vt = np.linalg.svd(D, full_matrices=False)
        D, X = D @ Vt.T, X @ Vt.T
    tol = tol or sdp.SolverTolerances()
    p = qfun_problem(cfg.Q, cfg.gamma, cfg.mu, D, X, canonical)
    sol = sdp.solve(p, tol, backend)
    return qfun_from_solution(p, sol, n, tol)

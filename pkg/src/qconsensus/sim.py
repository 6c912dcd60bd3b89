"""Closed-loop simulation of the networked agents and rate certification."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.distance import pdist

from .errors import ConfigError
from .graph import Mode, SpectralGraph, dedup_modes
from .lqr import AgentModel
from .numerics import spectral_radius

CERT_TOL = 1e-9
OVERFLOW_BOUND = 1e9


@dataclass(frozen=True)
class SimConfig:
    steps: int
    K: NDArray[np.float64]
    c: float
    x0: NDArray[np.float64] | None = None
    init_range: tuple[float, float] = (0.0, 10.0)
    seed: int | None = None
    switch_on_step: int = 0
    pre_switch: str = "probe"
    noise_std: float = 1.0

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if not 0 <= self.switch_on_step <= self.steps:
            raise ConfigError(f"switch_on_step must lie in [0, steps], got {self.switch_on_step}")
        if self.pre_switch not in ("probe", "open_loop"):
            raise ConfigError(f"pre_switch must be 'probe' or 'open_loop', got {self.pre_switch!r}")
        object.__setattr__(self, "K", np.atleast_2d(np.asarray(self.K, dtype=np.float64)))


@dataclass
class SimTrace:
    states: NDArray[np.float64]
    max_err: NDArray[np.float64]
    mean_err: NDArray[np.float64]
    switch_on_step: int = 0
    overflow: bool = False

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    def to_csv(self, path: str | Path | None = None) -> str:
        """Columns: step, x_{i,d} in agent-major order, max_err, mean_err."""
        _, N, n = self.states.shape
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step"] + [f"x_{i + 1}_{d + 1}" for i in range(N) for d in range(n)] + ["max_err", "mean_err"])
        for k in range(self.states.shape[0]):
            w.writerow(
                [k]
                + [repr(float(v)) for v in self.states[k].ravel()]
                + [repr(float(self.max_err[k])), repr(float(self.mean_err[k]))]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def parse_csv(cls, text: str) -> SimTrace:
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        cols = header[1:-2]
        N = max(int(c.split("_")[1]) for c in cols)
        n = len(cols) // N
        vals = np.array([[float(v) for v in r] for r in body])
        return cls(vals[:, 1:-2].reshape(-1, N, n), vals[:, -2], vals[:, -1])


def step(
    states: ArrayLike,
    am: AgentModel,
    sg: SpectralGraph,
    K: ArrayLike,
    c: float,
) -> NDArray[np.float64]:
    """One synchronous update; ``states`` is N x n, one agent per row.

    x_i+ = A x_i - c B K sum_j a_ij (x_i - x_j), evaluated agentwise as
    X A^T - c (L X) (B K)^T.
    """
    X = np.asarray(states, dtype=np.float64)
    K = np.atleast_2d(np.asarray(K, dtype=np.float64))
    if X.shape != (sg.n_agents, am.n):
        raise ConfigError(f"states have shape {X.shape}, expected ({sg.n_agents}, {am.n})")
    if K.shape != (am.m, am.n):
        raise ConfigError(f"K has shape {K.shape}, expected ({am.m}, {am.n})")
    return X @ am.A.T - c * (sg.laplacian @ X) @ (am.B @ K).T


def consensus_errors(X: NDArray[np.float64]) -> tuple[float, float]:
    """Max and mean pairwise Euclidean distance between agents."""
    if X.shape[0] < 2:
        return 0.0, 0.0
    d = pdist(X)
    return float(d.max()), float(d.mean())


def run(sim: SimConfig, am: AgentModel, sg: SpectralGraph) -> SimTrace:
    """Simulate ``sim.steps`` steps; before ``switch_on_step`` agents only probe."""
    N, n = sg.n_agents, am.n
    rng = np.random.default_rng(sim.seed)
    if sim.x0 is not None:
        X = np.asarray(sim.x0, dtype=np.float64).reshape(N, n)
    else:
        X = rng.uniform(*sim.init_range, size=(N, n))
    states = [X]
    overflow = False
    for k in range(sim.steps):
        if k < sim.switch_on_step:
            U = rng.standard_normal((N, am.m)) * sim.noise_std if sim.pre_switch == "probe" else np.zeros((N, am.m))
            X = X @ am.A.T + U @ am.B.T
        else:
            X = step(X, am, sg, sim.K, sim.c)
        if not np.all(np.abs(X) <= OVERFLOW_BOUND):
            overflow = True
            break
        states.append(X)
    arr = np.stack(states)
    errs = np.array([consensus_errors(x) for x in arr])
    return SimTrace(arr, errs[:, 0], errs[:, 1], sim.switch_on_step, overflow)


@dataclass
class RateCertificate:
    modes: list[Mode]
    radii: list[float]
    bound: float
    cert_tol: float = CERT_TOL
    passed: bool = field(init=False)

    def __post_init__(self) -> None:
        self.passed = all(r < self.bound + self.cert_tol for r in self.radii)

    @property
    def worst(self) -> float:
        return max(self.radii) if self.radii else 0.0


def certify_rate(
    am: AgentModel,
    sg: SpectralGraph,
    K: ArrayLike,
    c: float,
    mu: float,
    cert_tol: float = CERT_TOL,
) -> RateCertificate:
    """rho(A - c lambda B K) for every distinct nonzero Laplacian mode vs 1/mu."""
    return certify_modes(am, dedup_modes(sg), K, c, mu, cert_tol)


def certify_modes(
    am: AgentModel,
    modes: list[Mode],
    K: ArrayLike,
    c: float,
    mu: float,
    cert_tol: float = CERT_TOL,
) -> RateCertificate:
    BK = am.B @ np.atleast_2d(np.asarray(K, dtype=np.float64))
    radii = [spectral_radius(am.A - c * md.complex * BK) for md in modes]
    return RateCertificate(list(modes), radii, 1.0 / mu, cert_tol)


def decay_slope(trace: SimTrace, floor_rel: float = 1e-10, tail_frac: float = 0.5) -> float:
    """Least-squares slope of log(max_err) against k over the post-switch tail.

    Samples at or below ``floor_rel`` times the largest state magnitude are
    treated as roundoff and dropped before the fit.
    """
    k0 = trace.switch_on_step
    e = trace.max_err[k0:]
    scale = np.abs(trace.states[k0:]).max(axis=(1, 2))
    ks = np.arange(k0, k0 + e.size)
    keep = e > floor_rel * np.maximum(scale, 1.0)
    ks, e = ks[keep], e[keep]
    if e.size < 4:
        raise ValueError("too few samples above the roundoff floor to fit a slope")
    start = int(e.size * (1 - tail_frac))
    ks, e = ks[start:], e[start:]
    slope, _ = np.polyfit(ks, np.log(e), 1)
    return float(slope)

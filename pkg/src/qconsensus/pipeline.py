"""End-to-end design: Q-function, coupling gain, certification, sweeps and tables."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import minimize_scalar

from . import sdp
from .coupling import (
    CouplingPath,
    CouplingProblem,
    CouplingResult,
    convex_concave_loop,
    max_beta,
    solve_coupling_convex,
)
from .data import TrajectoryBatch, collect_trajectory, pool_batches, solve_qfun_data
from .errors import (
    ConfigError,
    DegenerateInterval,
    ModelError,
    NonConvergence,
    SdpInfeasible,
    SolverFailure,
)
from .graph import Mode, SpectralGraph, dedup_modes, has_spanning_tree
from .lqr import AgentModel, DesignConfig, QFunction, solve_dare, solve_qfun_model
from .numerics import eigenvalues, min_eigenvalue, numerical_rank
from .sim import CERT_TOL, certify_modes

log = logging.getLogger(__name__)

Verdict = sdp.Verdict
DataSource = Union[AgentModel, TrajectoryBatch, Sequence[TrajectoryBatch]]


class DesignMode(str, enum.Enum):
    MODEL_BASED = "ModelBased"
    DATA_DRIVEN = "DataDriven"


class CouplingStrategy(str, enum.Enum):
    CONVEX_DIRECT = "ConvexDirect"
    CONVEX_CONCAVE = "ConvexConcave"
    DIRECT_THEN_FALLBACK = "DirectThenFallback"


class Method(str, enum.Enum):
    THEOREM6 = "Theorem6"
    ALGORITHM1 = "Algorithm1"
    BASELINE = "Baseline"
    THEOREM4 = "Theorem4"


def _floats(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


@dataclass
class GainReport:
    gamma: float
    mu: float
    verdict: Verdict
    method: str
    K: NDArray[np.float64] | None = None
    c: float = math.nan
    beta: float = math.nan
    alpha: float | None = None
    c1: float = math.nan
    c2: float = math.nan
    iterations: int = 0
    modes: list[tuple[float, float]] = field(default_factory=list)
    radii: list[float] = field(default_factory=list)
    certified: bool | None = None
    certified_with: str = ""
    timings: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.verdict == Verdict.FEASIBLE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        d["K"] = None if self.K is None else _floats(self.K)
        for k in ("c", "beta", "c1", "c2"):
            d[k] = None if math.isnan(d[k]) else d[k]
        d["modes"] = [list(m) for m in self.modes]
        return d

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, default=_json_default) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> GainReport:
        d = dict(d)
        d["verdict"] = Verdict(d["verdict"])
        d["K"] = None if d.get("K") is None else np.asarray(d["K"], dtype=np.float64)
        for k in ("c", "beta", "c1", "c2"):
            d[k] = math.nan if d.get(k) is None else float(d[k])
        d["modes"] = [tuple(m) for m in d.get("modes", [])]
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> GainReport:
        return cls.from_dict(json.loads(text))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, enum.Enum):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


def identified_model(data: TrajectoryBatch | Sequence[TrajectoryBatch]) -> AgentModel:
    """Least-squares [A B] = X D^+, used only to certify data-driven designs."""
    batches = [data] if isinstance(data, TrajectoryBatch) else list(data)
    D, X = pool_batches(batches)
    AB = X @ np.linalg.pinv(D)
    n = X.shape[0]
    return AgentModel(AB[:, :n], AB[:, n:])


def _qfunction(source: DataSource, cfg: DesignConfig, tol: sdp.SolverTolerances) -> QFunction:
    if isinstance(source, AgentModel):
        return solve_qfun_model(source, cfg, tol)
    return solve_qfun_data(source, cfg, tol)


def design(
    source: DataSource,
    sg: SpectralGraph,
    cfg: DesignConfig,
    path: CouplingStrategy = CouplingStrategy.DIRECT_THEN_FALLBACK,
    certify_with: AgentModel | None = None,
    tol: sdp.SolverTolerances | None = None,
    shared_beta: bool = False,
) -> GainReport:
    """Design (K, c) for one gamma and certify the result per Laplacian mode.

    ``source`` is either an agent model or trajectory data. Data-driven
    designs are certified against ``certify_with`` when given, otherwise
    against the least-squares model implied by the same data.
    """
    tol = tol or sdp.SolverTolerances()
    path = CouplingStrategy(path)
    if not has_spanning_tree(sg):
        raise ModelError("graph has no spanning tree; consensus is impossible")
    modes = dedup_modes(sg)
    method = "ModelBased" if isinstance(source, AgentModel) else "DataDriven"
    report = GainReport(cfg.gamma, cfg.mu, Verdict.INDETERMINATE, f"{method}/{path.value}")
    report.modes = [tuple(m) for m in modes]
    t0 = time.perf_counter()
    try:
        qfun = _qfunction(source, cfg, tol)
    except SdpInfeasible as exc:
        report.verdict, report.message = Verdict.INFEASIBLE, str(exc)
        return report
    except SolverFailure as exc:
        report.message = str(exc)
        return report
    t1 = time.perf_counter()
    report.K = qfun.K
    report.solver = {"qfun": qfun.stats}
    cp_ = CouplingProblem(qfun, cfg.Q, cfg.gamma, tuple(modes), cfg.strict_margin())
    res = _couple(cp_, path, tol, shared_beta)
    t2 = time.perf_counter()
    report.timings = {"qfun_ms": 1e3 * (t1 - t0), "coupling_ms": 1e3 * (t2 - t1)}
    report.verdict = res.verdict
    report.message = res.message
    report.method = f"{method}/{res.path.value}"
    report.c, report.beta, report.alpha = res.c_star, res.beta, res.alpha
    report.c1, report.c2, report.iterations = res.c1, res.c2, res.iterations
    if math.isfinite(res.c_star):
        model = source if isinstance(source, AgentModel) else certify_with
        report.certified_with = "model" if model is not None else "identified"
        model = model if model is not None else identified_model(source)
        cert = certify_modes(model, modes, qfun.K, res.c_star, cfg.mu)
        report.radii = cert.radii
        report.certified = cert.passed
        if report.feasible and not cert.passed:
            report.verdict = Verdict.INDETERMINATE
            report.message = f"rate certificate failed: max radius {cert.worst:.6g} vs bound {1 / cfg.mu:.6g}"
    return report


def _couple(cp_: CouplingProblem, path: CouplingStrategy, tol, shared_beta: bool) -> CouplingResult:
    direct = None
    if path in (CouplingStrategy.CONVEX_DIRECT, CouplingStrategy.DIRECT_THEN_FALLBACK):
        try:
            direct = solve_coupling_convex(cp_, tol)
        except DegenerateInterval as exc:
            direct = CouplingResult(Verdict.INDETERMINATE, CouplingPath.CONVEX_DIRECT, message=str(exc))
        if path == CouplingStrategy.CONVEX_DIRECT or direct.feasible:
            return direct
    c0 = direct.c_star if direct is not None and direct.feasible else None
    try:
        return convex_concave_loop(cp_, c0=c0, shared_beta=shared_beta, tol=tol)
    except SolverFailure as exc:
        return CouplingResult(Verdict.INDETERMINATE, CouplingPath.CONVEX_CONCAVE, message=str(exc))


# ---------------------------------------------------------------- gamma sweep


@dataclass(frozen=True)
class SweepConfig:
    """Gamma schedule plus the fixed design settings.

    The grid is either explicit (``gammas``), additive (``step``) or
    multiplicative (``factor``; a zero start jumps to ``gamma_first``).
    """

    Q: NDArray[np.float64]
    mu: float = 1.0
    gamma0: float = 0.0
    gamma_max: float = 1000.0
    step: float | None = None
    factor: float | None = 10.0
    gamma_first: float = 0.01
    gammas: tuple[float, ...] | None = None
    mode: DesignMode = DesignMode.MODEL_BASED
    coupling_path: CouplingStrategy = CouplingStrategy.DIRECT_THEN_FALLBACK
    stop_on_infeasible: bool = True

    def grid(self) -> list[float]:
        if self.gammas is not None:
            if not self.gammas:
                raise ConfigError("empty gamma list")
            return [float(g) for g in self.gammas]
        if self.gamma0 < 0:
            raise ConfigError("gamma0 must be >= 0")
        if self.gamma0 > self.gamma_max:
            raise ConfigError(f"gamma0 = {self.gamma0} exceeds gamma_max = {self.gamma_max}")
        if self.step is not None:
            if self.step <= 0:
                raise ConfigError("additive step must be positive")
            k = int(math.floor((self.gamma_max - self.gamma0) / self.step + 1e-9))
            return [self.gamma0 + i * self.step for i in range(k + 1)]
        if self.factor is None or self.factor <= 1:
            raise ConfigError("multiplicative factor must exceed 1")
        out, g = [], self.gamma0
        while g <= self.gamma_max * (1 + 1e-12):
            out.append(g)
            g = self.gamma_first if g == 0 else g * self.factor
        return out


@dataclass
class SweepResult:
    reports: list[GainReport]
    recommended: GainReport | None
    diagnostics: str = ""


def gamma_sweep(
    sc: SweepConfig,
    sg: SpectralGraph,
    source: DataSource,
    certify_with: AgentModel | None = None,
    tol: sdp.SolverTolerances | None = None,
) -> SweepResult:
    """Walk the gamma grid upward and keep the largest feasible design.

    With ``stop_on_infeasible`` the walk ends at the first gamma that is not
    Feasible, as in the data-driven consensus procedure. Larger gamma means
    a smaller control effort, so the last feasible point is recommended.
    """
    reports: list[GainReport] = []
    best = None
    for g in sc.grid():
        cfg = DesignConfig(sc.Q, g, sc.mu)
        rep = design(source, sg, cfg, sc.coupling_path, certify_with, tol)
        reports.append(rep)
        if rep.feasible:
            best = rep
        elif sc.stop_on_infeasible:
            break
    diag = "" if best is not None else "no feasible gamma: " + "; ".join(
        f"gamma={r.gamma:g}: {r.verdict.value} {r.message}".strip() for r in reports
    )
    return SweepResult(reports, best, diag)


# ---------------------------------------------------------------- baseline


@dataclass
class BaselineResult:
    verdict: Verdict
    theta: float
    g_min: float = math.nan
    c: float = math.nan
    K: NDArray[np.float64] | None = None
    radii: list[float] = field(default_factory=list)
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.verdict == Verdict.FEASIBLE


def worst_mode_gap(c: float, lams: Sequence[complex]) -> float:
    return max(abs(1 - c * l) for l in lams)


def minimize_mode_gap(lams: Sequence[complex]) -> tuple[float, float]:
    """argmin/min over c > 0 of max_i |1 - c lambda_i| (a convex function of c)."""
    lams = list(lams)
    hi = 2.0 / min(l.real for l in lams) * (1.0 + max(abs(l) for l in lams) ** 2)
    res = minimize_scalar(
        lambda c: worst_mode_gap(c, lams), bounds=(1e-9, hi), method="bounded", options={"xatol": 1e-12}
    )
    return float(res.x), float(res.fun)


def baseline_theorem3(am: AgentModel, Q: ArrayLike, gamma: float, sg: SpectralGraph) -> BaselineResult:
    """Riccati-based design with a gain-margin test on the Laplacian spectrum.

    Feasible iff some c > 0 puts every 1 - c*lambda_i strictly inside the
    disc of radius theta = sqrt(gamma / (gamma + lambda_max(B'PB))).
    """
    if numerical_rank(am.B) < am.m:
        raise ModelError("baseline design needs B with full column rank")
    if not has_spanning_tree(sg):
        raise ModelError("graph has no spanning tree")
    if gamma <= 0:
        return BaselineResult(Verdict.INFEASIBLE, 0.0, message="gamma = 0 gives theta = 0")
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    try:
        P = solve_dare(am, Q, gamma, 1.0)
    except NonConvergence as exc:
        return BaselineResult(Verdict.INDETERMINATE, math.nan, message=str(exc))
    BtPB = am.B.T @ P @ am.B
    theta = math.sqrt(gamma / (gamma + float(np.linalg.eigvalsh(0.5 * (BtPB + BtPB.T))[-1])))
    K = np.linalg.solve(gamma * np.eye(am.m) + BtPB, am.B.T @ P @ am.A)
    modes = dedup_modes(sg)
    c, g_min = minimize_mode_gap([md.complex for md in modes])
    res = BaselineResult(Verdict.INFEASIBLE, theta, g_min, c, K)
    if g_min < theta:
        res.verdict = Verdict.FEASIBLE
        res.radii = certify_modes(am, modes, K, c, 1.0).radii
    else:
        res.message = f"min_c max|1 - c lambda| = {g_min:.4g} >= theta = {theta:.4g}"
    return res


# ---------------------------------------------------------------- gamma monotonicity


@dataclass
class PairCheck:
    gamma1: float
    gamma2: float
    w_diff_min_eig: float
    w_monotone: bool
    beta1: float | None = None
    beta2: float | None = None
    beta_monotone: bool | None = None


@dataclass
class MonotonicityReport:
    strictly_unstable: bool
    pairs: list[PairCheck]

    @property
    def passed(self) -> bool:
        return all(p.w_monotone and p.beta_monotone is not False for p in self.pairs)


def verify_theorem7(
    am: AgentModel,
    Q: ArrayLike,
    mu: float,
    gamma_pairs: Sequence[tuple[float, float]],
    w_tol: float = 1e-7,
    beta_tol: float = 1e-6,
    tol: sdp.SolverTolerances | None = None,
) -> MonotonicityReport:
    """Check W grows with gamma, and beta shrinks when A is strictly unstable.

    Beta here is the largest value admitted by the gamma-free coupling LMI;
    the graph constraints only bound beta from below and do not move it.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    unstable = bool(np.all(np.abs(eigenvalues(am.A)) > 1))
    cache: dict[float, QFunction] = {}

    def qf(g: float) -> QFunction:
        if g not in cache:
            cache[g] = solve_qfun_model(am, DesignConfig(Q, g, mu), tol)
        return cache[g]

    pairs = []
    for g1, g2 in gamma_pairs:
        if g1 > g2:
            raise ConfigError(f"gamma pair ({g1}, {g2}) is not ordered")
        dW = qf(g2).W - qf(g1).W
        lo = min_eigenvalue(0.5 * (dW + dW.T))
        chk = PairCheck(g1, g2, lo, lo >= -w_tol)
        if unstable:
            b1 = max_beta(qf(g1), Q, tol=tol)
            b2 = max_beta(qf(g2), Q, tol=tol)
            chk.beta1, chk.beta2, chk.beta_monotone = b1, b2, b1 >= b2 - beta_tol
        pairs.append(chk)
    return MonotonicityReport(unstable, pairs)


# ---------------------------------------------------------------- feasibility table


TABLE_COLUMNS = ("method", "gamma", "verdict", "beta", "c", "alpha", "wall_ms")


@dataclass
class TableCell:
    method: str
    gamma: float
    verdict: Verdict
    beta: float = math.nan
    c: float = math.nan
    alpha: float = math.nan
    wall_ms: float = math.nan
    message: str = ""


@dataclass
class FeasibilityTable:
    cells: list[TableCell]

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(c.method for c in self.cells))

    @property
    def gammas(self) -> list[float]:
        return list(dict.fromkeys(c.gamma for c in self.cells))

    def verdict(self, method: str, gamma: float) -> Verdict:
        for c in self.cells:
            if c.method == method and c.gamma == gamma:
                return c.verdict
        raise KeyError((method, gamma))

    def column(self, method: str) -> list[Verdict]:
        return [c.verdict for c in self.cells if c.method == method]

    def pattern(self, method: str) -> str:
        return "".join(v.value[0] for v in self.column(method))

    def has_indeterminate(self) -> bool:
        return any(c.verdict == Verdict.INDETERMINATE for c in self.cells)

    def monotone_cutoff(self, method: str) -> bool:
        """Once Infeasible, the method stays Infeasible for every larger gamma."""
        seen = False
        for c in sorted((c for c in self.cells if c.method == method), key=lambda c: c.gamma):
            seen = seen or c.verdict == Verdict.INFEASIBLE
            if seen and c.verdict != Verdict.INFEASIBLE:
                return False
        return True

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for c in self.cells:
            w.writerow([c.method, repr(c.gamma), c.verdict.value] + [_num(x) for x in (c.beta, c.c, c.alpha, c.wall_ms)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def parse_csv(cls, text: str) -> FeasibilityTable:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != TABLE_COLUMNS:
            raise ConfigError(f"feasibility table header must be {','.join(TABLE_COLUMNS)}")
        cells = []
        for r in rows[1:]:
            nums = [math.nan if x == "" else float(x) for x in r[3:]]
            cells.append(TableCell(r[0], float(r[1]), Verdict(r[2]), *nums))
        return cls(cells)

    def to_text(self) -> str:
        gammas = self.gammas
        head = ["method"] + [f"{g:g}" for g in gammas]
        rows = [head]
        for m in self.methods:
            rows.append([m] + [self.verdict(m, g).value for g in gammas])
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        lines = ["  ".join(x.ljust(w) for x, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _num(x: float | None) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def build_feasibility_table(
    am: AgentModel,
    sg: SpectralGraph,
    Q: ArrayLike,
    mu: float,
    gammas: Sequence[float],
    methods: Sequence[Method | str] = (Method.THEOREM6, Method.ALGORITHM1, Method.BASELINE),
    data_seed: int = 0,
    data_length: int | None = None,
    tol: sdp.SolverTolerances | None = None,
    shared_beta: bool = False,
) -> FeasibilityTable:
    """Verdict for every (method, gamma) cell.

    Theorem6 and Algorithm1 run on noiseless trajectory data collected once
    from ``am`` with ``data_seed``; Theorem4 uses the model directly. Every
    Feasible design cell is certified against the true model.
    """
    if not gammas:
        raise ConfigError("empty gamma list")
    methods = [Method(m) for m in methods]
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    batch = None
    if any(m in (Method.THEOREM6, Method.ALGORITHM1) for m in methods):
        batch = collect_trajectory(am, length=data_length, seed=data_seed)
    cells = []
    for m in methods:
        for g in gammas:
            t0 = time.perf_counter()
            cells.append(_cell(m, float(g), am, sg, Q, mu, batch, tol, shared_beta))
            cells[-1].wall_ms = 1e3 * (time.perf_counter() - t0)
    return FeasibilityTable(cells)


def _cell(m: Method, g, am, sg, Q, mu, batch, tol, shared_beta) -> TableCell:
    if m == Method.BASELINE:
        r = baseline_theorem3(am, Q, g, sg)
        return TableCell(m.value, g, r.verdict, c=r.c, message=r.message)
    cfg = DesignConfig(Q, g, mu)
    path = CouplingStrategy.CONVEX_CONCAVE if m == Method.ALGORITHM1 else CouplingStrategy.CONVEX_DIRECT
    source = am if m == Method.THEOREM4 else batch
    try:
        rep = design(source, sg, cfg, path, certify_with=am, tol=tol, shared_beta=shared_beta)
    except ModelError as exc:
        return TableCell(m.value, g, Verdict.INDETERMINATE, message=str(exc))
    alpha = math.nan if rep.alpha is None else rep.alpha
    return TableCell(m.value, g, rep.verdict, rep.beta, rep.c, alpha, message=rep.message)

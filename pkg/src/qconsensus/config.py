"""Run-configuration files (JSON) and the bundled example fixtures."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, ConsensusError
from .graph import Digraph, SpectralGraph, build_laplacian
from .lqr import AgentModel
from .pipeline import CouplingStrategy, DesignMode

FIXTURE_PACKAGE = "qconsensus.fixtures"


@dataclass(frozen=True)
class DataSettings:
    length: int | None = None
    noise_std: float = 1.0
    seed: int = 0
    pooled: bool = False


@dataclass(frozen=True)
class SimSettings:
    steps: int = 100
    x0: NDArray[np.float64] | None = None
    init_range: tuple[float, float] = (0.0, 10.0)
    seed: int = 1
    switch_on_step: int = 0


@dataclass(frozen=True)
class RunConfig:
    model: AgentModel
    Q: NDArray[np.float64]
    graph: SpectralGraph
    gamma: float | None
    mu: float
    mode: DesignMode
    coupling_path: CouplingStrategy
    sweep: dict[str, Any] | None = None
    data: DataSettings = field(default_factory=DataSettings)
    sim: SimSettings = field(default_factory=SimSettings)
    benchmark: dict[str, Any] = field(default_factory=dict)
    name: str = ""


def _matrix(obj: Any, where: str, shape: tuple[int | None, int | None] = (None, None)) -> NDArray[np.float64]:
    if not isinstance(obj, list) or not obj:
        raise ConfigError(f"{where}: expected a non-empty 2-D array (list of rows)")
    rows = []
    for i, row in enumerate(obj):
        if not isinstance(row, list):
            raise ConfigError(f"{where}: row {i} is not a list")
        if rows and len(row) != len(rows[0]):
            raise ConfigError(f"{where}: row {i} has {len(row)} entries, expected {len(rows[0])}")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{where}[{i}][{j}]: expected a finite number, got {v!r}")
        rows.append(row)
    M = np.array(rows, dtype=np.float64)
    for axis, want in enumerate(shape):
        if want is not None and M.shape[axis] != want:
            raise ConfigError(f"{where}: shape {M.shape} does not match the expected size {want} on axis {axis}")
    return M


def _number(d: dict, key: str, where: str, default=None, lo: float | None = None) -> float | None:
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{where}.{key}: must be >= {lo}, got {v}")
    return float(v)


def _section(d: dict, key: str, required: bool = False) -> dict:
    v = d.get(key)
    if v is None:
        if required:
            raise ConfigError(f"missing required section '{key}'")
        return {}
    if not isinstance(v, dict):
        raise ConfigError(f"section '{key}' must be an object")
    return v


def parse_config(doc: dict, name: str = "") -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    sysd = _section(doc, "system", required=True)
    A = _matrix(sysd.get("A"), "system.A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise ConfigError(f"system.A: must be square, got {A.shape}")
    B = _matrix(sysd.get("B"), "system.B", (n, None))
    Q = _matrix(sysd.get("Q"), "system.Q", (n, n)) if "Q" in sysd else np.eye(n)

    gd = _section(doc, "graph", required=True)
    adj = _matrix(gd.get("adjacency"), "graph.adjacency")
    try:
        sg = build_laplacian(Digraph(adj))
        model = AgentModel(A, B)
    except ConsensusError as exc:
        raise ConfigError(str(exc)) from exc

    dd = _section(doc, "design", required=True)
    gamma = _number(dd, "gamma", "design", lo=0.0)
    mu = _number(dd, "mu", "design", 1.0, lo=1.0)
    try:
        mode = DesignMode(dd.get("mode", DesignMode.MODEL_BASED.value))
        path = CouplingStrategy(dd.get("coupling_path", CouplingStrategy.DIRECT_THEN_FALLBACK.value))
    except ValueError as exc:
        raise ConfigError(f"design: {exc}") from exc
    sweep = dd.get("sweep")
    if sweep is not None and not isinstance(sweep, dict):
        raise ConfigError("design.sweep must be an object")
    if gamma is None and sweep is None:
        raise ConfigError("design: give either 'gamma' or 'sweep'")

    da = _section(doc, "data")
    length = da.get("length")
    if length is not None and (not isinstance(length, int) or length < 1):
        raise ConfigError(f"data.length: expected a positive integer, got {length!r}")
    data = DataSettings(
        length=length,
        noise_std=_number(da, "noise_std", "data", 1.0, lo=0.0),
        seed=int(_number(da, "seed", "data", 0)),
        pooled=bool(da.get("pooled", False)),
    )

    sd = _section(doc, "sim")
    steps = sd.get("steps", 100)
    if not isinstance(steps, int) or steps < 1:
        raise ConfigError(f"sim.steps: expected an integer >= 1, got {steps!r}")
    init = sd.get("init", {"uniform": [0.0, 10.0]})
    if not isinstance(init, dict):
        raise ConfigError("sim.init must be an object")
    x0 = None
    rng_lohi = (0.0, 10.0)
    if "states" in init:
        x0 = _matrix(init["states"], "sim.init.states", (sg.n_agents, n))
    elif "uniform" in init:
        u = init["uniform"]
        if not (isinstance(u, list) and len(u) == 2 and u[0] <= u[1]):
            raise ConfigError("sim.init.uniform: expected [lo, hi] with lo <= hi")
        rng_lohi = (float(u[0]), float(u[1]))
    switch = sd.get("switch_on_step", 0)
    if not isinstance(switch, int) or not 0 <= switch <= steps:
        raise ConfigError(f"sim.switch_on_step: expected an integer in [0, {steps}], got {switch!r}")
    sim = SimSettings(steps, x0, rng_lohi, int(_number(init, "seed", "sim.init", 1)), switch)

    bench = _section(doc, "benchmark")
    return RunConfig(model, Q, sg, gamma, mu, mode, path, sweep, data, sim, bench, name or str(doc.get("name", "")))


def load_config(source: str | Path) -> RunConfig:
    """Read a config file; a bare fixture name such as ``example1`` also works."""
    p = Path(source)
    if p.exists():
        text, name = p.read_text(encoding="utf-8"), p.stem
    elif str(source) in fixture_names():
        text, name = fixture_text(str(source)), str(source)
    else:
        raise ConfigError(f"config file not found: {source}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(doc, name)


def fixture_names() -> list[str]:
    root = resources.files(FIXTURE_PACKAGE)
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".json"))


def fixture_text(name: str) -> str:
    return resources.files(FIXTURE_PACKAGE).joinpath(f"{name}.json").read_text(encoding="utf-8")


def load_fixture(name: str) -> RunConfig:
    return parse_config(json.loads(fixture_text(name)), name)

"""Command-line entry point: ``qconsensus {design,simulate,sweep,benchmark}``.

Exit codes: 0 success or feasible, 1 clean infeasibility, 2 usage or
configuration error, 3 solver failure or indeterminate result.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import sdp
from .config import RunConfig, load_config
from .data import collect_trajectory
from .errors import ConfigError, ConsensusError, SolverFailure
from .lqr import DesignConfig
from .pipeline import (
    CouplingStrategy,
    DesignMode,
    FeasibilityTable,
    GainReport,
    Method,
    SweepConfig,
    build_feasibility_table,
    design,
    gamma_sweep,
)
from .sim import SimConfig, run

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("qconsensus")


def _exit_for(verdict: sdp.Verdict) -> int:
    return {
        sdp.Verdict.FEASIBLE: EXIT_OK,
        sdp.Verdict.INFEASIBLE: EXIT_INFEASIBLE,
        sdp.Verdict.INDETERMINATE: EXIT_SOLVER,
    }[verdict]


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {exc}") from exc
    return vals


def _apply_overrides(rc: RunConfig, args) -> RunConfig:
    kw = {}
    if getattr(args, "mode", None):
        kw["mode"] = DesignMode(args.mode)
    if getattr(args, "gamma", None) is not None:
        kw["gamma"] = args.gamma
    if getattr(args, "mu", None) is not None:
        kw["mu"] = args.mu
    if getattr(args, "path", None):
        kw["coupling_path"] = CouplingStrategy(args.path)
    if getattr(args, "seed", None) is not None:
        kw["data"] = replace(rc.data, seed=args.seed)
        kw["sim"] = replace(rc.sim, seed=args.seed)
    return replace(rc, **kw) if kw else rc


def _source(rc: RunConfig):
    if rc.mode == DesignMode.MODEL_BASED:
        return rc.model
    n_batches = rc.graph.n_agents if rc.data.pooled else 1
    return [
        collect_trajectory(rc.model, rc.data.length, rc.data.noise_std, rc.data.seed + j, agent_id=j)
        for j in range(n_batches)
    ]


def cmd_design(args) -> int:
    rc = _apply_overrides(load_config(args.config), args)
    if rc.gamma is None:
        raise ConfigError("design needs design.gamma (or --gamma)")
    cfg = DesignConfig(rc.Q, rc.gamma, rc.mu)
    rep = design(_source(rc), rc.graph, cfg, rc.coupling_path, certify_with=rc.model)
    rep.to_json(args.out)
    print(f"{rep.verdict.value}: gamma={rep.gamma:g} mu={rep.mu:g} c={rep.c:.6g} beta={rep.beta:.6g}")
    if rep.radii:
        print(f"max mode radius {max(rep.radii):.6g} (bound {1 / rep.mu:.6g})")
    if rep.message:
        print(rep.message, file=sys.stderr)
    return _exit_for(rep.verdict)


def cmd_simulate(args) -> int:
    rc = _apply_overrides(load_config(args.config), args)
    try:
        rep = GainReport.from_json(Path(args.report).read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read report {args.report}: {exc}") from exc
    if rep.K is None or not np.isfinite(rep.c):
        raise ConfigError(f"report {args.report} has no gains (verdict {rep.verdict.value})")
    steps = args.steps if args.steps is not None else rc.sim.steps
    sim = SimConfig(
        steps=steps,
        K=rep.K,
        c=rep.c,
        x0=rc.sim.x0,
        init_range=rc.sim.init_range,
        seed=rc.sim.seed,
        switch_on_step=min(rc.sim.switch_on_step, steps),
    )
    trace = run(sim, rc.model, rc.graph)
    trace.to_csv(args.out)
    print(f"final max pairwise error {trace.max_err[-1]:.6e} (initial {trace.max_err[0]:.6e})")
    if trace.overflow:
        print("trajectory overflowed; trace truncated", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    rc = _apply_overrides(load_config(args.config), args)
    sw = dict(rc.sweep or {})
    sc = SweepConfig(
        Q=rc.Q,
        mu=rc.mu,
        gamma0=float(sw.get("gamma0", 0.0)),
        gamma_max=float(sw.get("gamma_max", 1000.0)),
        step=sw.get("step"),
        factor=sw.get("factor", None if "step" in sw else 10.0),
        gamma_first=float(sw.get("gamma_first", 0.01)),
        gammas=tuple(args.gammas) if args.gammas is not None else None,
        mode=rc.mode,
        coupling_path=rc.coupling_path,
    )
    res = gamma_sweep(sc, rc.graph, _source(rc), certify_with=rc.model)
    doc = {
        "reports": [r.to_dict() for r in res.reports],
        "recommended": None if res.recommended is None else res.recommended.to_dict(),
        "diagnostics": res.diagnostics,
    }
    Path(args.out).write_text(json.dumps(doc, indent=2, default=str) + "\n", encoding="utf-8")
    for r in res.reports:
        print(f"gamma={r.gamma:g}: {r.verdict.value}")
    if res.recommended is None:
        print(res.diagnostics, file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"recommended gamma = {res.recommended.gamma:g}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    rc = _apply_overrides(load_config(args.config), args)
    gammas = args.gammas if args.gammas is not None else rc.benchmark.get("gammas")
    if not gammas:
        raise ConfigError("benchmark needs a non-empty gamma list (--gammas)")
    methods = args.methods if args.methods is not None else rc.benchmark.get("methods", [m.value for m in Method])
    try:
        methods = [Method(m) for m in methods]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    table = build_feasibility_table(
        rc.model, rc.graph, rc.Q, rc.mu, gammas, methods, data_seed=rc.data.seed, data_length=rc.data.length
    )
    out = Path(args.out)
    table.to_csv(out.with_suffix(".csv"))
    out.with_suffix(".txt").write_text(table.to_text(), encoding="utf-8")
    print(table.to_text(), end="")
    return EXIT_SOLVER if table.has_indeterminate() else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qconsensus", description="Consensus gain design from models or data.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", required=True, help="JSON config file or bundled fixture name")
        sp.add_argument("--out", required=True, help=out_help)
        sp.add_argument("--seed", type=int, help="override every seed in the config")

    def design_flags(sp):
        sp.add_argument("--mode", choices=[m.value for m in DesignMode])
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--mu", type=float)
        sp.add_argument("--path", choices=[c.value for c in CouplingStrategy], help="coupling path")

    d = sub.add_parser("design", help="design K and c for one gamma")
    common(d, "report JSON path")
    design_flags(d)
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("simulate", help="simulate the network with a designed report")
    common(s, "trace CSV path")
    s.add_argument("--report", required=True)
    s.add_argument("--steps", type=int)
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="gamma sweep keeping the largest feasible design")
    common(w, "sweep JSON path")
    design_flags(w)
    w.add_argument("--gammas", type=_float_list)
    w.set_defaults(func=cmd_sweep)

    b = sub.add_parser("benchmark", help="feasibility table over methods and gammas")
    common(b, "output prefix; writes .csv and .txt")
    b.add_argument("--mu", type=float)
    b.add_argument("--gammas", type=_float_list)
    b.add_argument("--methods", type=lambda t: [x.strip() for x in t.split(",") if x.strip()])
    b.set_defaults(func=cmd_benchmark)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ConsensusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

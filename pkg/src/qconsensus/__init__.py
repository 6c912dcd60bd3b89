"""Rate-guaranteed dynamic consensus design for homogeneous linear agents.

Feedback gains come from a Q-function semidefinite program, built either
from a model (A, B) or from a short input-state trajectory. Coupling gains
come from a convex program or a convex-concave iteration over the Laplacian
spectrum. Every design is certified per Laplacian mode and can be checked
in closed-loop simulation.
"""

from __future__ import annotations

from .coupling import (
    CouplingProblem,
    CouplingResult,
    build_Ni,
    build_Sl,
    build_Sq,
    convex_concave_loop,
    solve_coupling_convex,
)
from .data import TrajectoryBatch, check_excitation, collect_trajectory, hankel, solve_qfun_data
from .errors import (
    ConfigError,
    ConsensusError,
    DegenerateInterval,
    GraphError,
    ModelError,
    NonConvergence,
    NotExciting,
    NumericsError,
    SdpInfeasible,
    SolverFailure,
    TrajectoryOverflow,
)
from .graph import Digraph, Mode, SpectralGraph, build_laplacian, dedup_modes, has_spanning_tree
from .lqr import AgentModel, DesignConfig, QFunction, check_controllable, dare_iterate, solve_qfun_model
from .pipeline import (
    FeasibilityTable,
    GainReport,
    SweepConfig,
    baseline_theorem3,
    build_feasibility_table,
    design,
    gamma_sweep,
    verify_theorem7,
)
from .sdp import Verdict
from .sim import SimConfig, SimTrace, certify_rate, run, step

__version__ = "0.1.0"

__all__ = [
    "AgentModel",
    "ConfigError",
    "ConsensusError",
    "CouplingProblem",
    "CouplingResult",
    "DegenerateInterval",
    "DesignConfig",
    "Digraph",
    "FeasibilityTable",
    "GainReport",
    "GraphError",
    "Mode",
    "ModelError",
    "NonConvergence",
    "NotExciting",
    "NumericsError",
    "QFunction",
    "SdpInfeasible",
    "SimConfig",
    "SimTrace",
    "SolverFailure",
    "SpectralGraph",
    "SweepConfig",
    "TrajectoryBatch",
    "TrajectoryOverflow",
    "Verdict",
    "baseline_theorem3",
    "build_Ni",
    "build_Sl",
    "build_Sq",
    "build_feasibility_table",
    "build_laplacian",
    "certify_rate",
    "check_controllable",
    "check_excitation",
    "collect_trajectory",
    "convex_concave_loop",
    "dare_iterate",
    "dedup_modes",
    "design",
    "gamma_sweep",
    "hankel",
    "has_spanning_tree",
    "run",
    "solve_coupling_convex",
    "solve_qfun_data",
    "solve_qfun_model",
    "step",
    "verify_theorem7",
]

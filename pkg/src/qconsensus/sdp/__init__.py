"""Semidefinite program description and solver adapter."""

from .problem import (
    LmiBlock,
    Objective,
    SdpProblem,
    Variable,
    affine_block,
    dumps,
    linear_objective,
    loads,
    scalar,
    symmetric,
)
from .solver import (
    DEFAULT_BACKEND,
    SdpSolution,
    SdpStatus,
    SolverTolerances,
    Verdict,
    feasibility_verdict,
    solve,
)

__all__ = [
    "DEFAULT_BACKEND",
    "LmiBlock",
    "Objective",
    "SdpProblem",
    "SdpSolution",
    "SdpStatus",
    "SolverTolerances",
    "Variable",
    "Verdict",
    "affine_block",
    "dumps",
    "feasibility_verdict",
    "linear_objective",
    "loads",
    "scalar",
    "solve",
    "symmetric",
]

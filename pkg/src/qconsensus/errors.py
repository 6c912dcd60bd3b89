"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ConsensusError(Exception):
    """Base class for all package errors."""


class NumericsError(ConsensusError):
    """Bad matrix input or an eigensolver that failed to converge."""


class GraphError(ConsensusError):
    """Invalid graph data or an inconsistent spectral classification."""


class ModelError(ConsensusError):
    """Agent model violates a structural assumption (e.g. controllability)."""


class NonConvergence(ConsensusError):
    """An iteration hit its cap before meeting its tolerance."""


class SolverFailure(ConsensusError):
    """The conic backend broke down or returned an unusable status.

    ``problem_dump`` carries the debug text of the offending problem when
    available so it can be attached to an issue report.
    """

    def __init__(self, message: str, problem_dump: str | None = None, status: str | None = None):
        super().__init__(message)
        self.problem_dump = problem_dump
        self.status = status


class SdpInfeasible(ConsensusError):
    """The backend returned a certificate of infeasibility."""

    def __init__(self, message: str, problem_dump: str | None = None):
        super().__init__(message)
        self.problem_dump = problem_dump


class NotExciting(ConsensusError):
    """Trajectory data matrix D lacks full row rank."""


class TrajectoryOverflow(ConsensusError):
    """Simulated state exceeded the overflow bound during data collection."""


class ConfigError(ConsensusError):
    """Run configuration failed validation."""


class DegenerateInterval(ConsensusError):
    """The feasible coupling-gain interval is narrower than the minimum width."""

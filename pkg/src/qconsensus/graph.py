"""Directed weighted graphs, Laplacians and their consensus modes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.sparse.csgraph import breadth_first_order

from .errors import GraphError
from .numerics import eigenvalues

ZERO_TOL_REL = 1e-8
DEDUP_TOL = 1e-8


class Mode(NamedTuple):
    """A nonzero Laplacian eigenvalue reduced to the data the coupling LMIs use."""

    re: float
    abs: float

    @property
    def s(self) -> float:
        """sqrt(1 - Re^2/|lambda|^2), i.e. |Im lambda| / |lambda|."""
        return float(np.sqrt(max(0.0, 1.0 - (self.re / self.abs) ** 2)))

    @property
    def complex(self) -> complex:
        # one representative of the conjugate pair (upper half plane)
        return complex(self.re, np.sqrt(max(0.0, self.abs**2 - self.re**2)))


@dataclass(frozen=True)
class Digraph:
    """Weighted digraph; ``weights[i, j] > 0`` means agent i listens to agent j."""

    weights: NDArray[np.float64]

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {w.shape}")
        if w.shape[0] < 1:
            raise GraphError("graph needs at least one agent")
        if not np.all(np.isfinite(w)):
            raise GraphError("adjacency has non-finite weights")
        if np.any(w < 0):
            i, j = np.argwhere(w < 0)[0]
            raise GraphError(f"negative weight a[{i},{j}] = {w[i, j]}")
        if np.any(np.diag(w) != 0):
            i = int(np.flatnonzero(np.diag(w))[0])
            raise GraphError(f"nonzero self-loop weight a[{i},{i}]")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_agents(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_edges(cls, n: int, edges: list[tuple[int, int, float]]) -> Digraph:
        """Edges given as ``(src, dst, weight)``; dst receives from src."""
        w = np.zeros((n, n))
        for src, dst, wt in edges:
            w[dst, src] = wt
        return cls(w)


@dataclass(frozen=True)
class SpectralGraph:
    graph: Digraph
    laplacian: NDArray[np.float64]
    spectrum: NDArray[np.complex128]
    zero_tol: float
    n_zero: int = field(default=0)

    @property
    def n_agents(self) -> int:
        return self.graph.n_agents

    @property
    def nonzero_eigenvalues(self) -> NDArray[np.complex128]:
        return self.spectrum[np.abs(self.spectrum) > self.zero_tol]


def build_laplacian(g: Digraph) -> SpectralGraph:
    """L = D - A with D the in-degree (row-sum) matrix."""
    A = g.weights
    L = np.diag(A.sum(axis=1)) - A
    spec = eigenvalues(L)
    norm = np.linalg.norm(L, 2)
    zero_tol = ZERO_TOL_REL * norm if norm > 0 else ZERO_TOL_REL
    n_zero = int(np.sum(np.abs(spec) <= zero_tol))
    L.setflags(write=False)
    spec.setflags(write=False)
    return SpectralGraph(g, L, spec, zero_tol, n_zero)


def _reachability_root_exists(A: NDArray[np.float64]) -> bool:
    # edge j -> i when a_ij > 0, so the transpose is the forward adjacency
    fwd = (A.T > 0).astype(np.int8)
    n = A.shape[0]
    for root in range(n):
        order = breadth_first_order(fwd, root, directed=True, return_predecessors=False)
        if len(order) == n:
            return True
    return False


def has_spanning_tree(sg: SpectralGraph) -> bool:
    """Spectral test (simple zero eigenvalue) checked against graph reachability.

    Raises:
        GraphError: if the two tests disagree, which signals a numerically
            borderline graph (e.g. weights spanning many orders of magnitude).
    """
    spectral = sg.n_zero == 1
    combinatorial = _reachability_root_exists(sg.graph.weights)
    if spectral != combinatorial:
        raise GraphError(
            f"spectral test ({sg.n_zero} zero eigenvalues under tol {sg.zero_tol:.2e}) "
            f"disagrees with reachability test ({combinatorial})"
        )
    return spectral


def dedup_modes(sg: SpectralGraph, tol: float = DEDUP_TOL) -> list[Mode]:
    """Distinct ``(Re lambda, |lambda|)`` pairs over the nonzero spectrum.

    Conjugate pairs and repeated eigenvalues collapse to a single entry.
    The result is sorted, so it does not depend on eigensolver ordering.
    """
    out: list[Mode] = []
    pairs = sorted((float(l.real), float(abs(l))) for l in sg.nonzero_eigenvalues)
    for re, ab in pairs:
        if re <= 0:
            raise GraphError(f"graph violates spanning-tree spectral property: eigenvalue with Re = {re:.3e}")
        if any(abs(re - m.re) <= tol and abs(ab - m.abs) <= tol for m in out):
            continue
        out.append(Mode(re, ab))
    return out


def spectral_graph(adjacency: ArrayLike) -> SpectralGraph:
    """Shorthand for ``build_laplacian(Digraph(adjacency))``."""
    return build_laplacian(Digraph(np.asarray(adjacency, dtype=np.float64)))

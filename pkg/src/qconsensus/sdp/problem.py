"""Backend-neutral description of a semidefinite program.

A problem is a set of named variables, a list of LMI blocks that must be
positive semidefinite, and a linear objective. Every block is stored in
explicit affine form

    block(v) = constant + sum_name tensordot(coeffs[name], v[name], axes=2)

so it can be evaluated, dumped to text, and handed to any conic backend
without knowing how it was assembled. Most callers never write the
coefficient tensors by hand: :func:`affine_block` extracts them by probing
a plain numpy function on basis matrices.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_\[\]\.]*$")
_SYM_ATOL = 1e-12


@dataclass(frozen=True)
class Variable:
    """A decision variable. Scalars use shape ``(1, 1)``."""

    name: str
    shape: tuple[int, int] = (1, 1)
    symmetric: bool = False

    def __post_init__(self) -> None:
        if not _NAME_RE.match(self.name):
            raise ValueError(f"invalid variable name {self.name!r}")
        r, c = self.shape
        if r < 1 or c < 1:
            raise ValueError(f"variable {self.name}: bad shape {self.shape}")
        if self.symmetric and r != c:
            raise ValueError(f"variable {self.name}: symmetric but not square")
        object.__setattr__(self, "shape", (int(r), int(c)))

    @property
    def is_scalar(self) -> bool:
        return self.shape == (1, 1)


def scalar(name: str) -> Variable:
    return Variable(name, (1, 1), False)


def symmetric(name: str, n: int) -> Variable:
    return Variable(name, (n, n), True)


@dataclass(eq=False)
class LmiBlock:
    """An affine symmetric matrix expression constrained to be PSD."""

    name: str
    constant: NDArray[np.float64]
    coeffs: dict[str, NDArray[np.float64]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not _NAME_RE.match(self.name):
            raise ValueError(f"invalid block name {self.name!r}")
        self.constant = np.asarray(self.constant, dtype=np.float64)
        k = self.constant.shape[0]
        if self.constant.shape != (k, k):
            raise ValueError(f"block {self.name}: constant must be square")
        self.coeffs = {n: np.asarray(c, dtype=np.float64) for n, c in self.coeffs.items()}
        scale = 1.0 + np.max(np.abs(self.constant), initial=0.0)
        if np.max(np.abs(self.constant - self.constant.T), initial=0.0) > _SYM_ATOL * scale:
            raise ValueError(f"block {self.name}: constant part is not symmetric")
        for n, c in self.coeffs.items():
            if c.ndim != 4 or c.shape[:2] != (k, k):
                raise ValueError(f"block {self.name}: coefficient for {n} has shape {c.shape}")
            cs = 1.0 + np.max(np.abs(c), initial=0.0)
            if np.max(np.abs(c - c.transpose(1, 0, 2, 3)), initial=0.0) > _SYM_ATOL * cs:
                raise ValueError(f"block {self.name}: coefficient for {n} is not symmetric")

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    def evaluate(self, values: Mapping[str, NDArray]) -> NDArray[np.float64]:
        out = self.constant.copy()
        for n, c in self.coeffs.items():
            out = out + np.tensordot(c, np.asarray(values[n], dtype=np.float64), axes=2)
        return 0.5 * (out + out.T)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LmiBlock):
            return NotImplemented
        return (
            self.name == other.name
            and np.array_equal(self.constant, other.constant)
            and self.coeffs.keys() == other.coeffs.keys()
            and all(np.array_equal(self.coeffs[k], other.coeffs[k]) for k in self.coeffs)
        )


@dataclass(eq=False)
class Objective:
    """Linear functional ``constant + sum_name <coeffs[name], v[name]>``."""

    coeffs: dict[str, NDArray[np.float64]] = field(default_factory=dict)
    constant: float = 0.0

    def __post_init__(self) -> None:
        self.coeffs = {n: np.asarray(c, dtype=np.float64) for n, c in self.coeffs.items()}
        self.constant = float(self.constant)

    def evaluate(self, values: Mapping[str, NDArray]) -> float:
        return self.constant + sum(float(np.sum(c * values[n])) for n, c in self.coeffs.items())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Objective):
            return NotImplemented
        return (
            self.constant == other.constant
            and self.coeffs.keys() == other.coeffs.keys()
            and all(np.array_equal(self.coeffs[k], other.coeffs[k]) for k in self.coeffs)
        )


@dataclass(eq=False)
class SdpProblem:
    variables: tuple[Variable, ...]
    blocks: tuple[LmiBlock, ...]
    objective: Objective
    sense: str = "maximize"

    def __post_init__(self) -> None:
        self.variables = tuple(self.variables)
        self.blocks = tuple(self.blocks)
        if self.sense not in ("maximize", "minimize"):
            raise ValueError(f"sense must be maximize or minimize, got {self.sense!r}")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")
        shapes = {v.name: v.shape for v in self.variables}
        for b in self.blocks:
            for n, c in b.coeffs.items():
                if n not in shapes:
                    raise ValueError(f"block {b.name} references undeclared variable {n}")
                if c.shape[2:] != shapes[n]:
                    raise ValueError(f"block {b.name}: coefficient shape mismatch for {n}")
        for n, c in self.objective.coeffs.items():
            if n not in shapes:
                raise ValueError(f"objective references undeclared variable {n}")
            if c.shape != shapes[n]:
                raise ValueError(f"objective coefficient shape mismatch for {n}")

    @property
    def scalar_vars(self) -> tuple[Variable, ...]:
        return tuple(v for v in self.variables if v.is_scalar)

    @property
    def matrix_vars(self) -> tuple[Variable, ...]:
        return tuple(v for v in self.variables if not v.is_scalar)

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SdpProblem):
            return NotImplemented
        return (
            self.sense == other.sense
            and self.variables == other.variables
            and self.blocks == other.blocks
            and self.objective == other.objective
        )

    def dumps(self) -> str:
        return dumps(self)


def _basis(var: Variable) -> list[tuple[tuple[int, int], NDArray]]:
    r, c = var.shape
    out = []
    for i in range(r):
        for j in range(c):
            if var.symmetric and j < i:
                continue
            E = np.zeros((r, c))
            E[i, j] = 1.0
            if var.symmetric and i != j:
                E[j, i] = 1.0
            out.append(((i, j), E))
    return out


def _random_value(var: Variable, rng: np.random.Generator) -> NDArray:
    X = rng.standard_normal(var.shape)
    return 0.5 * (X + X.T) if var.symmetric else X


def affine_block(
    name: str,
    fn: Callable[[Mapping[str, NDArray]], NDArray],
    variables: Sequence[Variable],
    check: bool = True,
) -> LmiBlock:
    """Extract the affine form of ``fn`` with respect to ``variables``.

    ``fn`` receives a mapping from variable name to a numpy value (scalars as
    ``(1, 1)`` arrays) and must return a symmetric matrix that is affine in
    those values. When ``check`` is set the recovered form is compared with
    ``fn`` at a random point.
    """
    zero = {v.name: np.zeros(v.shape) for v in variables}
    C = np.asarray(fn(zero), dtype=np.float64)
    if C.ndim == 0:
        C = C.reshape(1, 1)
    k = C.shape[0]
    coeffs: dict[str, NDArray] = {}
    for v in variables:
        coef = np.zeros((k, k) + v.shape)
        for (i, j), E in _basis(v):
            probe = dict(zero)
            probe[v.name] = E
            D = np.asarray(fn(probe), dtype=np.float64).reshape(k, k) - C
            if v.symmetric and i != j:
                coef[:, :, i, j] = 0.5 * D
                coef[:, :, j, i] = 0.5 * D
            else:
                coef[:, :, i, j] = D
        if np.any(coef):
            coeffs[v.name] = coef
    block = LmiBlock(name, C, coeffs)
    if check:
        rng = np.random.default_rng(0)
        point = {v.name: _random_value(v, rng) for v in variables}
        direct = np.asarray(fn(point), dtype=np.float64).reshape(k, k)
        direct = 0.5 * (direct + direct.T)
        err = np.max(np.abs(block.evaluate(point) - direct), initial=0.0)
        if err > 1e-8 * (1.0 + np.max(np.abs(direct), initial=0.0)):
            raise ValueError(f"block {name}: expression is not affine (mismatch {err:.2e})")
    return block


def linear_objective(
    fn: Callable[[Mapping[str, NDArray]], float],
    variables: Sequence[Variable],
) -> Objective:
    """Extract a linear objective from a numpy function, like :func:`affine_block`."""
    zero = {v.name: np.zeros(v.shape) for v in variables}
    c0 = float(fn(zero))
    coeffs: dict[str, NDArray] = {}
    for v in variables:
        coef = np.zeros(v.shape)
        for (i, j), E in _basis(v):
            probe = dict(zero)
            probe[v.name] = E
            d = float(fn(probe)) - c0
            if v.symmetric and i != j:
                coef[i, j] = coef[j, i] = 0.5 * d
            else:
                coef[i, j] = d
        if np.any(coef):
            coeffs[v.name] = coef
    return Objective(coeffs, c0)


# Debug text format: one header line, then one line per variable, one for the
# objective, one per block. Numbers go through json, which round-trips floats.

_HEADER = "# qconsensus-sdp v1"


def dumps(p: SdpProblem) -> str:
    lines = [_HEADER, f"sense {p.sense}"]
    for v in p.variables:
        kind = "sym" if v.symmetric else "full"
        lines.append(f"var {v.name} {v.shape[0]} {v.shape[1]} {kind}")
    obj = {"constant": p.objective.constant, "coeffs": {n: c.tolist() for n, c in p.objective.coeffs.items()}}
    lines.append("objective " + json.dumps(obj, separators=(",", ":")))
    for b in p.blocks:
        payload = {"constant": b.constant.tolist(), "coeffs": {n: c.tolist() for n, c in b.coeffs.items()}}
        lines.append(f"block {b.name} {b.size} " + json.dumps(payload, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def loads(text: str) -> SdpProblem:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _HEADER:
        raise ValueError("missing sdp dump header")
    sense = "maximize"
    variables: list[Variable] = []
    blocks: list[LmiBlock] = []
    objective = Objective()
    shapes: dict[str, tuple[int, int]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        tag, _, rest = line.partition(" ")
        try:
            if tag == "sense":
                sense = rest.strip()
            elif tag == "var":
                name, r, c, kind = rest.split()
                v = Variable(name, (int(r), int(c)), kind == "sym")
                variables.append(v)
                shapes[name] = v.shape
            elif tag == "objective":
                obj = json.loads(rest)
                objective = Objective(
                    {n: np.array(c, dtype=np.float64).reshape(shapes[n]) for n, c in obj["coeffs"].items()},
                    obj["constant"],
                )
            elif tag == "block":
                name, size, payload = rest.split(" ", 2)
                k = int(size)
                data = json.loads(payload)
                coeffs = {
                    n: np.array(c, dtype=np.float64).reshape((k, k) + shapes[n])
                    for n, c in data["coeffs"].items()
                }
                blocks.append(LmiBlock(name, np.array(data["constant"], dtype=np.float64).reshape(k, k), coeffs))
            else:
                raise ValueError(f"unknown record {tag!r}")
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return SdpProblem(tuple(variables), tuple(blocks), objective, sense)

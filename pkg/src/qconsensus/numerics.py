"""Dense matrix kernels used throughout the package.

All functions are pure and accept anything :func:`numpy.asarray` understands.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import NumericsError

SYMMETRY_RTOL = 1e-9
DEFAULT_RANK_TOL = 1e-9


def _square(M: ArrayLike, allow_complex: bool = True) -> NDArray:
    arr = np.asarray(M)
    if arr.dtype.kind not in "biufc":
        raise NumericsError(f"non-numeric matrix dtype {arr.dtype}")
    if arr.dtype.kind == "c" and not allow_complex:
        raise NumericsError("complex input not supported here")
    arr = arr.astype(np.complex128 if arr.dtype.kind == "c" else np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise NumericsError(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericsError("matrix has non-finite entries")
    return arr


def eigenvalues(M: ArrayLike) -> NDArray[np.complex128]:
    """All eigenvalues of ``M`` with multiplicity, sorted by descending real part.

    Ties in the real part are broken by descending imaginary part, so a
    conjugate pair always appears as ``(a+bi, a-bi)``.
    """
    arr = _square(M)
    if arr.shape[0] == 0:
        return np.zeros(0, dtype=np.complex128)
    try:
        vals = np.linalg.eigvals(arr)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"eigensolver did not converge: {exc}") from exc
    vals = vals.astype(np.complex128)
    order = np.lexsort((-vals.imag, -vals.real))
    return vals[order]


def spectral_radius(M: ArrayLike) -> float:
    """Largest eigenvalue modulus. Complex matrices are accepted."""
    vals = eigenvalues(M)
    return float(np.max(np.abs(vals))) if vals.size else 0.0


def symmetrize(S: ArrayLike, rtol: float = SYMMETRY_RTOL) -> NDArray[np.float64]:
    """Return ``(S + S.T)/2`` after checking ``S`` is symmetric to within roundoff.

    Raises:
        NumericsError: if ``max|S - S.T| > rtol * (1 + max|S|)``.
    """
    arr = _square(S, allow_complex=False)
    scale = 1.0 + (np.max(np.abs(arr)) if arr.size else 0.0)
    asym = np.max(np.abs(arr - arr.T)) if arr.size else 0.0
    if asym > rtol * scale:
        raise NumericsError(f"matrix not symmetric: max|S-S^T| = {asym:.3e}")
    return 0.5 * (arr + arr.T)


def min_eigenvalue(S: ArrayLike) -> float:
    """Smallest eigenvalue of a symmetric matrix (symmetrized first)."""
    sym = symmetrize(S)
    if sym.shape[0] == 0:
        return np.inf
    return float(np.linalg.eigvalsh(sym)[0])


def is_psd(S: ArrayLike, margin: float = 0.0) -> bool:
    """True iff the smallest eigenvalue of symmetric ``S`` is at least ``-margin``."""
    return min_eigenvalue(S) >= -margin


def numerical_rank(M: ArrayLike, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above ``rel_tol`` times the largest one."""
    arr = np.asarray(M, dtype=np.float64)
    if arr.ndim != 2:
        raise NumericsError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise NumericsError("matrix has non-finite entries")
    if arr.size == 0:
        return 0
    sv = np.linalg.svd(arr, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rel_tol * sv[0]))

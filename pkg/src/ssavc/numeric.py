"""Shared numerical primitives.

Symmetric eigendecomposition, inverse square roots of PSD matrices,
chi-square / normal distribution helpers, grid quadrature and seeded
random streams.  Every function accepts a single matrix or a stack of
matrices with shape ``(..., p, p)``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import DomainError, NotPositiveSemiDefinite, NumericalFailure


class EigenDecomposition(NamedTuple):
    """Eigenvalues in ascending order and the matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym(m) -> np.ndarray:
    """Return ``m`` as a float array symmetrized over its last two axes.

    The result satisfies ``out[..., i, j] == out[..., j, i]`` exactly.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DomainError(f"expected square matrix, got shape {a.shape}")
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so that each column's largest-magnitude entry is positive."""
    v = np.array(vectors, dtype=float, copy=True)
    idx = np.argmax(np.abs(v), axis=-2)
    lead = np.take_along_axis(v, idx[..., None, :], axis=-2)
    signs = np.where(lead < 0, -1.0, 1.0)
    return v * signs


def sym_eigen(m) -> EigenDecomposition:
    """Eigendecomposition of a (stack of) symmetric matrices.

    Eigenvalues are returned in ascending order; eigenvectors are sign
    normalized with :func:`canonical_signs` so repeated calls on the same
    input give identical bases.

    Raises
    ------
    NumericalFailure
        If the input is not finite or LAPACK fails to converge.
    """
    a = sym(m)
    if not np.all(np.isfinite(a)):
        raise NumericalFailure("matrix has non-finite entries")
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    return EigenDecomposition(w, canonical_signs(v))


def sym_eigvals(m) -> np.ndarray:
    """Ascending eigenvalues of a (stack of) symmetric matrices."""
    a = sym(m)
    if not np.all(np.isfinite(a)):
        raise NumericalFailure("matrix has non-finite entries")
    try:
        return np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc


def default_floor(m) -> np.ndarray | float:
    """Eigenvalue floor ``1e-10 * max(1, ||m||_F)`` used by :func:`spd_sqrt_inverse`."""
    norms = np.linalg.norm(np.asarray(m, dtype=float), axis=(-2, -1))
    return 1e-10 * np.maximum(1.0, norms)


def spd_sqrt_inverse(m, floor=None) -> np.ndarray:
    """Symmetric inverse square root ``V diag(max(lam, floor)^(-1/2)) V^T``.

    Parameters
    ----------
    m : array_like, shape (..., p, p)
        Symmetric, positive semi-definite up to rounding.
    floor : float or array, optional
        Eigenvalues below ``floor`` are raised to it.  Defaults to
        :func:`default_floor`.

    Raises
    ------
    NotPositiveSemiDefinite
        If an eigenvalue is below ``-floor``.
    """
    a = sym(m)
    if floor is None:
        floor = default_floor(a)
    floor = np.asarray(floor, dtype=float)
    if np.any(floor <= 0):
        raise DomainError("floor must be positive")
    w, v = sym_eigen(a)
    fl = floor[..., None] if floor.ndim else floor
    if np.any(w < -fl):
        raise NotPositiveSemiDefinite(f"minimum eigenvalue {w.min():.3e} below -floor")
    scale = np.maximum(w, fl) ** -0.5
    return sym(np.einsum("...ij,...j,...kj->...ik", v, scale, v))


def spd_sqrt(m) -> np.ndarray:
    """Symmetric PSD square root; negative rounding noise is clipped to zero."""
    w, v = sym_eigen(m)
    return sym(np.einsum("...ij,...j,...kj->...ik", v, np.sqrt(np.clip(w, 0.0, None)), v))


def chi_square_survival(x, dof):
    """Upper tail ``P(chi2_dof > x)`` via the regularized incomplete gamma function."""
    dof = np.asarray(dof)
    if np.any(dof < 1):
        raise DomainError("dof must be >= 1")
    x = np.asarray(x, dtype=float)
    out = special.gammaincc(0.5 * dof, 0.5 * np.clip(x, 0.0, None))
    return float(out) if out.ndim == 0 else out


def chi_square_quantile(prob: float, dof: int) -> float:
    """Return ``x`` with ``P(chi2_dof <= x) = prob``."""
    if not 0.0 < prob < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {prob}")
    if dof < 1:
        raise DomainError("dof must be >= 1")
    return float(special.chdtri(dof, 1.0 - prob))


def normal_cdf(x):
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def normal_quantile(prob: float) -> float:
    """Standard normal quantile function."""
    if not 0.0 < prob < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {prob}")
    return float(special.ndtri(prob))


def integrate_grid(values, grid) -> np.ndarray | float:
    """Trapezoid rule along the last axis of ``values`` on a strictly increasing grid."""
    v = np.asarray(values, dtype=float)
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise DomainError("grid needs at least two points")
    if v.shape[-1] != g.size:
        raise DomainError(f"values length {v.shape[-1]} does not match grid length {g.size}")
    dg = np.diff(g)
    if np.any(dg <= 0):
        raise DomainError("grid must be strictly increasing")
    out = np.sum(0.5 * (v[..., 1:] + v[..., :-1]) * dg, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; PCG64 streams are identical across platforms."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def child_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent 64-bit seeds from ``seed`` deterministically."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]

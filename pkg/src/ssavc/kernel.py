"""Kernel estimators of the local covariance A^2(u), the deviation matrix
M(u) = A^2(u) - mean A^2, the standardizer F(u) = A(u)^{-1} and the
fourth-moment constant mu4 = E(Y^2 - 1)^2.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import BoundaryError, DegenerateEstimate, DomainError
from .numeric import spd_sqrt_inverse, sym

# Slack used when checking that u lies in [h, 1 - h].
_BAND_EPS = 1e-12


@dataclass(frozen=True)
class TimeSeries:
    """Observations X_1..X_T stored as a ``(p, T)`` array (column t is X_t)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.array(self.data, dtype=float)
        if a.ndim == 1:
            a = a[None, :]
        if a.ndim != 2:
            raise DomainError("time series data must be two-dimensional (p, T)")
        p, T = a.shape
        if p < 1 or T < 4:
            raise DomainError(f"need p >= 1 and T >= 4, got p={p}, T={T}")
        if not np.all(np.isfinite(a)):
            raise DomainError("time series contains non-finite values")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @classmethod
    def from_rows(cls, rows) -> "TimeSeries":
        """Build from a ``(T, p)`` array (one observation per row)."""
        return cls(np.asarray(rows, dtype=float).T)

    @property
    def p(self) -> int:
        return self.data.shape[0]

    @property
    def T(self) -> int:
        return self.data.shape[1]

    @property
    def rows(self) -> np.ndarray:
        """``(T, p)`` view of the observations."""
        return self.data.T

    def scaled(self, c: float) -> "TimeSeries":
        return TimeSeries(c * self.data)

    def project(self, basis) -> "TimeSeries":
        """Series B^T X_t for a ``(p, d)`` basis."""
        b = np.asarray(basis, dtype=float)
        return TimeSeries(b.T @ self.data)


def triangle_kernel(v):
    """K(v) = 1 - |v| on |v| < 1, zero elsewhere."""
    out = np.clip(1.0 - np.abs(np.asarray(v, dtype=float)), 0.0, None)
    return float(out) if out.ndim == 0 else out


def _convolved_triangle(u: float) -> float:
    lo, hi = max(-1.0, u - 1.0), min(1.0, u + 1.0)
    if lo >= hi:
        return 0.0
    pts = sorted({lo, hi, min(max(0.0, lo), hi), min(max(u, lo), hi)})
    val, _ = integrate.quad(lambda v: triangle_kernel(v) * triangle_kernel(u - v), lo, hi,
                            points=pts[1:-1] or None, epsabs=1e-13, epsrel=1e-12)
    return val


@lru_cache(maxsize=None)
def convolution_norms(family: str = "triangle") -> tuple[float, float]:
    """Return ``(||K||_2^2, ||Kbar||_2^2)`` with Kbar the self-convolution of K.

    ``||K||_2^2 = 2/3`` for the triangle kernel; the second value is found by
    adaptive quadrature of Kbar^2 over [-2, 2].
    """
    if family != "triangle":
        raise DomainError(f"unsupported kernel family {family!r}")
    l2 = 2.0 / 3.0
    conv, _ = integrate.quad(lambda u: _convolved_triangle(u) ** 2, -2.0, 2.0,
                             points=[-1.0, 0.0, 1.0], epsabs=1e-12, epsrel=1e-11)
    return l2, conv


def convolved_kernel(u) -> float:
    """Kbar(u) = int K(v) K(u - v) dv for the triangle kernel."""
    return _convolved_triangle(float(u))


def default_bandwidth(T: int) -> float:
    return float(T) ** -0.35


@dataclass(frozen=True)
class KernelSpec:
    """Triangle kernel with bandwidth ``h``."""

    bandwidth: float
    family: str = "triangle"

    def __post_init__(self):
        if self.family != "triangle":
            raise DomainError(f"unsupported kernel family {self.family!r}")
        if not 0.0 < self.bandwidth < 0.5:
            raise DomainError(f"bandwidth must lie in (0, 0.5), got {self.bandwidth}")

    @classmethod
    def for_length(cls, T: int, bandwidth: float | None = None) -> "KernelSpec":
        return cls(default_bandwidth(T) if bandwidth is None else bandwidth)

    @property
    def h(self) -> float:
        return self.bandwidth

    @property
    def l2norm_sq(self) -> float:
        return convolution_norms(self.family)[0]

    @property
    def conv_l2norm_sq(self) -> float:
        return convolution_norms(self.family)[1]

    def weights(self, T: int, us) -> np.ndarray:
        """Matrix of ``(1/T) K_h(u - t/T)`` with shape ``(len(us), T)``."""
        t = np.arange(1, T + 1) / T
        us = np.atleast_1d(np.asarray(us, dtype=float))
        h = self.bandwidth
        return triangle_kernel((us[:, None] - t[None, :]) / h) / (h * T)


def _check_band(us, h: float) -> None:
    us = np.atleast_1d(us)
    if np.any(us < h - _BAND_EPS) or np.any(us > 1.0 - h + _BAND_EPS):
        bad = us[(us < h - _BAND_EPS) | (us > 1.0 - h + _BAND_EPS)][0]
        raise BoundaryError(f"u={bad:.6g} outside the interior band [{h:.6g}, {1 - h:.6g}]")


def _outer_products(x: TimeSeries) -> np.ndarray:
    r = x.rows
    return np.einsum("ti,tj->tij", r, r)


def estimate_a2_grid(x: TimeSeries, us, k: KernelSpec) -> np.ndarray:
    """Kernel estimates of A^2(u) for every u in ``us``; shape ``(n, p, p)``."""
    us = np.atleast_1d(np.asarray(us, dtype=float))
    _check_band(us, k.h)
    w = k.weights(x.T, us)
    p = x.p
    a2 = w @ _outer_products(x).reshape(x.T, p * p)
    return sym(a2.reshape(-1, p, p))


def estimate_a2(x: TimeSeries, u: float, k: KernelSpec) -> np.ndarray:
    """Kernel estimate (1/T) sum_t X_t X_t^T K_h(u - t/T) of A^2(u)."""
    return estimate_a2_grid(x, [u], k)[0]


def sample_second_moment(x: TimeSeries) -> np.ndarray:
    """(1/T) sum_t X_t X_t^T, the estimate of the time-averaged A^2."""
    return sym(x.data @ x.data.T / x.T)


@dataclass(frozen=True)
class LocalCovarianceEstimate:
    """Local estimates at one rescaled time ``u``."""

    u: float
    a2_hat: np.ndarray
    abar2_hat: np.ndarray
    m_hat: np.ndarray
    f_hat: np.ndarray

    @property
    def standardized(self) -> np.ndarray:
        """Symmetrized F M F^T whose eigenvalues drive the dimension tests."""
        return sym(self.f_hat @ self.m_hat @ self.f_hat.T)


@dataclass(frozen=True)
class LocalCovarianceGrid:
    """Stacked local estimates over a grid of rescaled times."""

    us: np.ndarray
    a2_hat: np.ndarray
    abar2_hat: np.ndarray
    m_hat: np.ndarray
    f_hat: np.ndarray

    def __len__(self) -> int:
        return len(self.us)

    def __getitem__(self, i: int) -> LocalCovarianceEstimate:
        return LocalCovarianceEstimate(float(self.us[i]), self.a2_hat[i], self.abar2_hat,
                                       self.m_hat[i], self.f_hat[i])

    @property
    def standardized(self) -> np.ndarray:
        f = self.f_hat
        return sym(f @ self.m_hat @ np.swapaxes(f, -1, -2))


def estimate_m_grid(x: TimeSeries, us, k: KernelSpec) -> LocalCovarianceGrid:
    us = np.atleast_1d(np.asarray(us, dtype=float))
    a2 = estimate_a2_grid(x, us, k)
    abar2 = sample_second_moment(x)
    m = sym(a2 - abar2)
    f = spd_sqrt_inverse(a2)
    return LocalCovarianceGrid(us, a2, abar2, m, f)


def estimate_m(x: TimeSeries, u: float, k: KernelSpec) -> LocalCovarianceEstimate:
    """Estimate M(u) = A^2(u) - mean A^2 together with F(u) = A(u)^{-1}."""
    return estimate_m_grid(x, [u], k)[0]


class Mu4Method(str, enum.Enum):
    GAUSSIAN_FIXED = "gauss"
    PLUG_IN = "plugin"
    TRACE_USTAT = "ustat"


@dataclass(frozen=True)
class Mu4Estimate:
    value: float
    method: Mu4Method = Mu4Method.GAUSSIAN_FIXED
    degenerate: bool = False
    details: dict = field(default_factory=dict, compare=False)

    @classmethod
    def gaussian(cls) -> "Mu4Estimate":
        return cls(2.0, Mu4Method.GAUSSIAN_FIXED)


MU4_FLOOR = 0.05


def _lagged_ustat(values: np.ndarray, k: KernelSpec) -> np.ndarray:
    """sum_{t1 != t2} v_{t1} . v_{t2} K_h((t1 - t2)/T) / (T (T - 1)) for columns of v.

    ``values`` has shape ``(T, q)``; one statistic per column is returned.
    Pairs with |t1 - t2| >= Th carry zero kernel weight and are skipped.
    """
    T = values.shape[0]
    h = k.h
    max_lag = min(T - 1, int(np.ceil(T * h)))
    total = np.zeros(values.shape[1])
    for lag in range(1, max_lag + 1):
        w = triangle_kernel(lag / (T * h)) / h
        if w == 0.0:
            continue
        total += 2.0 * w * np.einsum("tq,tq->q", values[:-lag], values[lag:])
    return total / (T * (T - 1))


def estimate_mu4(x: TimeSeries, method=Mu4Method.GAUSSIAN_FIXED, k: KernelSpec | None = None,
                 a2_at_grid=None) -> Mu4Estimate:
    """Estimate mu4 = E(Y^2 - 1)^2 of the standardized innovations.

    Parameters
    ----------
    method : Mu4Method or str
        ``"gauss"`` returns 2 exactly.  ``"plugin"`` averages
        ``(A_hat(t/T)^{-1} X_t)_i^4 - 1`` over t with t/T in [h, 1-h].
        ``"ustat"`` uses kernel-weighted U-statistics of the diagonal,
        off-diagonal and trace parts of X_t X_t^T.
    a2_at_grid : array, optional
        Precomputed A^2 estimates at every t/T, shape ``(T, p, p)``; only
        used by ``"plugin"``.

    Both data-driven methods are clamped below at 0.05.  A non-positive
    diagonal U-statistic triggers a :class:`DegenerateEstimate` warning and
    the Gaussian value is returned with ``degenerate=True``.
    """
    method = Mu4Method(method)
    if method is Mu4Method.GAUSSIAN_FIXED:
        return Mu4Estimate.gaussian()
    if k is None:
        k = KernelSpec.for_length(x.T)
    T = x.T
    if method is Mu4Method.PLUG_IN:
        t = np.arange(1, T + 1) / T
        inside = (t >= k.h - _BAND_EPS) & (t <= 1 - k.h + _BAND_EPS)
        if a2_at_grid is None:
            a2 = estimate_a2_grid(x, t[inside], k)
        else:
            a2 = np.asarray(a2_at_grid, dtype=float)
            if a2.shape != (T, x.p, x.p):
                raise DomainError(f"a2_at_grid must have shape {(T, x.p, x.p)}")
            a2 = a2[inside]
        f = spd_sqrt_inverse(a2)
        z = np.einsum("tij,tj->ti", f, x.rows[inside])
        raw = float(np.mean(z**4) - 1.0)
        return Mu4Estimate(max(raw, MU4_FLOOR), method, details={"raw": raw})
    if T < 50:
        raise DomainError("the U-statistic estimator needs T >= 50")
    r = x.rows
    diag = r**2
    iu, ju = np.triu_indices(x.p, 1)
    off = r[:, iu] * r[:, ju]
    trace = diag.sum(axis=1, keepdims=True)
    i1 = _lagged_ustat(diag, k).sum()
    i2 = _lagged_ustat(off, k).sum() if off.shape[1] else 0.0
    i3 = _lagged_ustat(trace, k)[0]
    fourth = float(np.mean(trace[:, 0] ** 2))
    details = {"I1": float(i1), "I2": float(i2), "I3": float(i3), "trace_sq_mean": fourth}
    if i1 <= 0.0:
        warnings.warn("diagonal U-statistic is non-positive; using mu4 = 2", DegenerateEstimate,
                      stacklevel=2)
        return Mu4Estimate(2.0, Mu4Method.GAUSSIAN_FIXED, degenerate=True, details=details)
    raw = (fourth - 4.0 * i2 - i3) / i1
    details["raw"] = float(raw)
    return Mu4Estimate(max(float(raw), MU4_FLOOR), method, details=details)

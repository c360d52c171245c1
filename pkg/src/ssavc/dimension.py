"""Local and global tests for the dimension of the stationary subspace.

The local statistic at ``u`` sums the ``r`` smallest squared eigenvalues of
the standardized matrix ``F(u) M(u) F(u)^T``::

    xi_r(u) = T h / (||K||^2 mu4) * sum_{i <= r} gamma2_i(u)

and is compared with chi-square(r(r+1)/2).  The global statistic integrates
``xi_r`` over an interval ``H``, centers and scales it, and is compared with a
one-sided normal critical value.  Both are applied sequentially from ``r = p``
downward to estimate ``d0``; positive/negative counts follow from the signs
of the remaining eigenvalues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .kernel import (KernelSpec, LocalCovarianceEstimate, Mu4Estimate, Mu4Method, TimeSeries,
                     estimate_m_grid, estimate_mu4)
from .numeric import (chi_square_quantile, chi_square_survival, integrate_grid, normal_cdf,
                      normal_quantile, sym_eigvals)

_NODE_EPS = 1e-12


@dataclass(frozen=True)
class TestConfig:
    """Settings shared by the local, global and split procedures.

    Parameters
    ----------
    alpha : float
        Significance level of every test in the sequence.
    h : float, optional
        Bandwidth; ``T ** -0.35`` when omitted.
    mu4 : Mu4Estimate, float or {"gauss", "plugin", "ustat"}
        Fourth-moment constant or the method used to estimate it.
    grid_density : int
        Quadrature nodes per unit length (at least 8).
    interval : (a, b), optional
        Integration interval ``H``; defaults to ``(h, 1 - h)``.
    alpha_schedule : bool
        Use ``min(alpha, 1 / log T)`` instead of ``alpha``.
    """

    __test__ = False

    alpha: float = 0.05
    h: float | None = None
    mu4: object = "gauss"
    grid_density: int = 64
    interval: tuple[float, float] | None = None
    alpha_schedule: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.grid_density < 8:
            raise DomainError("grid_density must be at least 8")
        if self.interval is not None:
            a, b = self.interval
            if not 0.0 < a < b < 1.0:
                raise DomainError(f"interval must satisfy 0 < a < b < 1, got {self.interval}")

    def kernel(self, T: int) -> KernelSpec:
        return KernelSpec.for_length(T, self.h)

    def effective_alpha(self, T: int) -> float:
        if self.alpha_schedule:
            return min(self.alpha, 1.0 / math.log(T))
        return self.alpha

    def resolve_interval(self, h: float) -> tuple[float, float]:
        if self.interval is None:
            return (h, 1.0 - h)
        a, b = self.interval
        if a < h - _NODE_EPS or b > 1.0 - h + _NODE_EPS:
            raise DomainError(f"interval {self.interval} must lie inside [{h:.6g}, {1 - h:.6g}]")
        return (max(a, h), min(b, 1.0 - h))

    def resolve_mu4(self, x: TimeSeries, k: KernelSpec) -> Mu4Estimate:
        if isinstance(self.mu4, Mu4Estimate):
            return self.mu4
        if isinstance(self.mu4, (int, float)) and not isinstance(self.mu4, bool):
            if self.mu4 <= 0:
                raise DomainError("mu4 must be positive")
            return Mu4Estimate(float(self.mu4), Mu4Method.PLUG_IN if self.mu4 != 2 else
                               Mu4Method.GAUSSIAN_FIXED)
        return estimate_mu4(x, Mu4Method(self.mu4), k)


def quadrature_grid(a: float, b: float, density: int, extra=()) -> np.ndarray:
    """Nodes ``{a} U {j/density in (a, b)} U extra U {b}``, sorted and de-duplicated."""
    if not a < b:
        raise DomainError("grid interval must have a < b")
    j = np.arange(math.ceil(a * density), math.floor(b * density) + 1) / density
    pts = np.concatenate([[a], j, np.asarray(extra, dtype=float), [b]])
    pts = pts[(pts >= a) & (pts <= b)]
    pts = np.unique(pts)
    keep = np.concatenate([[True], np.diff(pts) > _NODE_EPS])
    pts = pts[keep]
    pts[0], pts[-1] = a, b
    return pts


def _node_index(grid: np.ndarray, value: float) -> int:
    i = int(np.argmin(np.abs(grid - value)))
    if abs(grid[i] - value) > 1e-10:
        raise DomainError(f"point {value:.6g} is not a node of the quadrature grid")
    return i


@dataclass(frozen=True)
class GammaGrid:
    """Standardized eigenvalues on a grid of rescaled times.

    ``gamma`` holds ascending eigenvalues of ``F M F^T`` per node; ``xi[:, r]``
    is the local statistic for ``r = 0..p``.
    """

    us: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray
    T: int
    h: float
    mu4: float

    @property
    def p(self) -> int:
        return self.gamma.shape[1]

    def restrict(self, a: float, b: float) -> "GammaGrid":
        i, j = _node_index(self.us, a), _node_index(self.us, b)
        if j - i < 1:
            raise DomainError("sub-interval contains no grid cell")
        sl = slice(i, j + 1)
        return GammaGrid(self.us[sl], self.gamma[sl], self.xi[sl], self.T, self.h, self.mu4)


def _xi_from_gamma(gamma: np.ndarray, T: int, k: KernelSpec, mu4: float) -> np.ndarray:
    g2 = np.sort(gamma**2, axis=-1)
    scale = T * k.h / (k.l2norm_sq * mu4)
    cum = np.cumsum(g2, axis=-1)
    zeros = np.zeros(cum.shape[:-1] + (1,))
    return scale * np.concatenate([zeros, cum], axis=-1)


def gamma_grid(x: TimeSeries, us, k: KernelSpec, mu4: float) -> GammaGrid:
    est = estimate_m_grid(x, us, k)
    gamma = sym_eigvals(est.standardized)
    return GammaGrid(np.asarray(us, dtype=float), gamma, _xi_from_gamma(gamma, x.T, k, mu4),
                     x.T, k.h, mu4)


# ---------------------------------------------------------------- local tests


def local_xi(est: LocalCovarianceEstimate, r: int, T: int, k: KernelSpec, mu4=2.0) -> float:
    """Local statistic ``xi_r(u)`` for one estimate."""
    mu4 = mu4.value if isinstance(mu4, Mu4Estimate) else float(mu4)
    gamma = sym_eigvals(est.standardized)
    if not 0 <= r <= gamma.size:
        raise DomainError(f"r must lie in [0, {gamma.size}]")
    return float(_xi_from_gamma(gamma, T, k, mu4)[r])


def local_critical_values(p: int, alpha: float) -> np.ndarray:
    """chi-square(r(r+1)/2) upper-alpha quantiles for r = 0..p (r = 0 gets +inf)."""
    out = np.full(p + 1, np.inf)
    for r in range(1, p + 1):
        out[r] = chi_square_quantile(1.0 - alpha, r * (r + 1) // 2)
    return out


def sequential_local_d0(xi, alpha: float) -> int:
    """Largest ``r`` in ``p, p-1, ..., 1`` whose statistic does not reject; else 0.

    ``xi[r]`` is the statistic for ``r = 0..p``.
    """
    xi = np.asarray(xi, dtype=float)
    p = xi.size - 1
    crit = local_critical_values(p, alpha)
    for r in range(p, 0, -1):
        if xi[r] <= crit[r]:
            return r
    return 0


def local_dpm(gamma_hat, d0_hat: int) -> tuple[int, int]:
    """Split the eigenvalues outside the ``d0_hat`` smallest in magnitude by sign."""
    g = np.asarray(gamma_hat, dtype=float)
    if not 0 <= d0_hat <= g.size:
        raise DomainError("d0_hat out of range")
    order = np.argsort(np.abs(g), kind="stable")
    rest = g[order[d0_hat:]]
    dplus = int(np.sum(rest > 0))
    return dplus, int(rest.size - dplus)


@dataclass(frozen=True)
class LocalDimensionResult:
    u: float
    gamma_hat: np.ndarray
    gamma2_hat: np.ndarray
    xi: np.ndarray
    pvalues: np.ndarray
    d0_hat: int
    dplus_hat: int
    dminus_hat: int

    @property
    def d_hat(self) -> int:
        return self.d0_hat + min(self.dplus_hat, self.dminus_hat)

    @property
    def p(self) -> int:
        return self.gamma_hat.size


def _local_result(u, gamma, xi, alpha) -> LocalDimensionResult:
    p = gamma.size
    pv = np.ones(p + 1)
    for r in range(1, p + 1):
        pv[r] = chi_square_survival(xi[r], r * (r + 1) // 2)
    d0 = sequential_local_d0(xi, alpha)
    dplus, dminus = local_dpm(gamma, d0)
    return LocalDimensionResult(float(u), gamma.copy(), np.sort(gamma**2), xi.copy(), pv, d0,
                                dplus, dminus)


def local_dimension_grid(x: TimeSeries, us, cfg: TestConfig) -> list[LocalDimensionResult]:
    """Local sequential estimates at each ``u`` in ``us``."""
    k = cfg.kernel(x.T)
    mu4 = cfg.resolve_mu4(x, k).value
    gg = gamma_grid(x, np.atleast_1d(us), k, mu4)
    alpha = cfg.effective_alpha(x.T)
    return [_local_result(u, g, xi, alpha) for u, g, xi in zip(gg.us, gg.gamma, gg.xi)]


def local_dimension(x: TimeSeries, u: float, cfg: TestConfig) -> LocalDimensionResult:
    return local_dimension_grid(x, [u], cfg)[0]


# --------------------------------------------------------------- global tests


def global_scale(r: int, length: float, k: KernelSpec, mu4: float) -> tuple[float, float]:
    """Centering and standard deviation of the integrated local statistic."""
    if r < 1:
        raise DomainError("global statistic needs r >= 1")
    center = length * r * (mu4 + r - 1.0) / mu4
    var = (k.h * (k.conv_l2norm_sq / k.l2norm_sq**2)
           * 2.0 * (r * mu4**2 + 2.0 * r * (r - 1.0)) / mu4**2 * length)
    return center, math.sqrt(var)


def _global_stats(gg: GammaGrid, k: KernelSpec) -> np.ndarray:
    """Standardized global statistics for r = 1..p on the grid's interval."""
    length = gg.us[-1] - gg.us[0]
    integrals = integrate_grid(gg.xi.T, gg.us)
    out = np.empty(gg.p)
    for r in range(1, gg.p + 1):
        c, s = global_scale(r, length, k, gg.mu4)
        out[r - 1] = (integrals[r] - c) / s
    return out


def _sequential_from_stats(stats: np.ndarray, crit: float) -> int:
    for r in range(stats.size, 0, -1):
        if stats[r - 1] <= crit:
            return r
    return 0


def _dpm_from_grid(gg: GammaGrid, d0: int):
    p = gg.p
    if not 0 <= d0 <= p:
        raise DomainError("d0_hat out of range")
    if d0 == p:
        return 0, 0, np.array([abs(integrate_grid(gg.gamma.sum(axis=1), gg.us))]), None, 1
    if d0 >= 1:
        zeta = np.array([abs(integrate_grid(gg.gamma[:, r:r + d0].sum(axis=1), gg.us))
                         for r in range(p - d0 + 1)])
        r_hat = int(np.argmin(zeta)) + 1
        dminus = r_hat - 1
        return p - d0 - dminus, dminus, zeta, None, r_hat
    cum = np.concatenate([np.zeros((gg.gamma.shape[0], 1)), np.cumsum(gg.gamma, axis=1)], axis=1)
    total = cum[:, -1:]
    low = np.abs(integrate_grid(cum.T, gg.us))
    high = np.abs(integrate_grid((total - cum).T, gg.us))
    eta = low + high
    dminus = int(np.argmax(eta))
    return p - dminus, dminus, None, eta, dminus


@dataclass(frozen=True)
class GlobalDimensionResult:
    """Global estimates on one interval.

    ``xi_global[r - 1]`` is the standardized statistic for ``r``; ``zeta`` is
    filled when ``d0_hat >= 1`` and ``eta`` otherwise.
    """

    interval: tuple[float, float]
    xi_global: np.ndarray
    pvalues: np.ndarray
    critical_value: float
    d0_hat: int
    dplus_hat: int
    dminus_hat: int
    r_hat: int
    zeta: np.ndarray | None = None
    eta: np.ndarray | None = None
    mu4: float = 2.0
    n_grid: int = 0

    @property
    def d_hat(self) -> int:
        return self.d0_hat + min(self.dplus_hat, self.dminus_hat)

    @property
    def p(self) -> int:
        return self.xi_global.size


def _global_result(gg: GammaGrid, k: KernelSpec, crit: float) -> GlobalDimensionResult:
    stats = _global_stats(gg, k)
    d0 = _sequential_from_stats(stats, crit)
    dplus, dminus, zeta, eta, r_hat = _dpm_from_grid(gg, d0)
    pv = 1.0 - normal_cdf(stats)
    return GlobalDimensionResult((float(gg.us[0]), float(gg.us[-1])), stats, np.atleast_1d(pv),
                                 crit, d0, dplus, dminus, r_hat, zeta, eta, gg.mu4, gg.us.size)


def _prepare(x: TimeSeries, cfg: TestConfig, extra=()):
    k = cfg.kernel(x.T)
    a, b = cfg.resolve_interval(k.h)
    mu4 = cfg.resolve_mu4(x, k).value
    grid = quadrature_grid(a, b, cfg.grid_density, extra)
    return k, gamma_grid(x, grid, k, mu4)


def global_xi(x: TimeSeries, r: int, cfg: TestConfig) -> float:
    """Standardized global statistic for ``H0: d0(u) = r`` on ``cfg``'s interval."""
    if r < 1 or r > x.p:
        raise DomainError(f"r must lie in [1, {x.p}]")
    k, gg = _prepare(x, cfg)
    return float(_global_stats(gg, k)[r - 1])


def sequential_global_d0(x: TimeSeries, cfg: TestConfig) -> int:
    return global_dimension(x, cfg).d0_hat


def global_dpm(x: TimeSeries, cfg: TestConfig, d0_hat: int):
    """``(d+^, d-^, diagnostics)`` from the zeta (``d0_hat >= 1``) or eta curve."""
    _, gg = _prepare(x, cfg)
    dplus, dminus, zeta, eta, r_hat = _dpm_from_grid(gg, d0_hat)
    return dplus, dminus, {"zeta": zeta, "eta": eta, "r_hat": r_hat}


def dpm_from_population(us, gammas, d0_hat: int) -> tuple[int, int]:
    """Apply the zeta/eta rule to given eigenvalue curves (rows ascending)."""
    gammas = np.asarray(gammas, dtype=float)
    gg = GammaGrid(np.asarray(us, dtype=float), gammas, np.zeros((len(us), gammas.shape[1] + 1)),
                   1, 0.1, 2.0)
    dplus, dminus, *_ = _dpm_from_grid(gg, d0_hat)
    return dplus, dminus


def global_dimension(x: TimeSeries, cfg: TestConfig) -> GlobalDimensionResult:
    """Sequential global ``d0`` test followed by the ``d+``/``d-`` estimators."""
    k, gg = _prepare(x, cfg)
    crit = normal_quantile(1.0 - cfg.effective_alpha(x.T))
    return _global_result(gg, k, crit)


# ------------------------------------------------------------- dyadic splits


@dataclass(frozen=True)
class SplitNode:
    level: int
    index: int
    interval: tuple[float, float]
    midpoint: float
    result: GlobalDimensionResult | None
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class SplitTree:
    depth: int
    nodes: dict = field(default_factory=dict)
    outcomes: dict = field(default_factory=dict)

    def node(self, level: int, index: int) -> SplitNode:
        return self.nodes[(level, index)]

    def level(self, k: int) -> list[SplitNode]:
        return [self.nodes[(k, i)] for i in range(1, 2**k + 1) if (k, i) in self.nodes]


def classify_split(parent: int, left: int | None, right: int | None) -> str:
    """Outcome tag for a parent ``d0`` and its two children."""
    if left is None or right is None:
        return "Other"
    if left == parent and right == parent:
        return "P1"
    if (left == parent and right < parent) or (right == parent and left < parent):
        return "P2"
    if left > parent or right > parent:
        return "P3"
    return "Other"


def split_test(x: TimeSeries, cfg: TestConfig, depth: int) -> SplitTree:
    """Global tests on the dyadic intervals ``((i-1)/2^k, i/2^k]`` for ``k <= depth``.

    Intervals are clipped to the root interval.  Level ``k`` uses the
    critical value ``2^(-k/2) c_alpha``.  Nodes shorter than ``4h`` carry the
    flag ``"insufficient-bandwidth"``; nodes without a full grid cell get no
    result and the flag ``"empty"``.
    """
    if depth < 0:
        raise DomainError("depth must be nonnegative")
    dyadic = np.arange(1, 2**depth) / 2**depth
    k, gg = _prepare(x, cfg, extra=dyadic)
    a0, b0 = gg.us[0], gg.us[-1]
    c_alpha = normal_quantile(1.0 - cfg.effective_alpha(x.T))
    nodes = {}
    for lev in range(depth + 1):
        n = 2**lev
        for i in range(1, n + 1):
            lo, hi = max((i - 1) / n, a0), min(i / n, b0)
            flags = []
            result = None
            if hi - lo > _NODE_EPS:
                if hi - lo < 4 * k.h:
                    flags.append("insufficient-bandwidth")
                try:
                    sub = gg.restrict(lo, hi)
                    result = _global_result(sub, k, 2.0 ** (-lev / 2) * c_alpha)
                except DomainError:
                    result = None
            if result is None:
                flags.append("empty")
            mid = 0.5 * ((i - 1) / n + i / n)
            nodes[(lev, i)] = SplitNode(lev, i, (float(lo), float(hi)), mid, result, tuple(flags))
    outcomes = {}
    for lev in range(depth):
        for i in range(1, 2**lev + 1):
            par = nodes[(lev, i)].result
            if par is None:
                continue
            left, right = nodes[(lev + 1, 2 * i - 1)].result, nodes[(lev + 1, 2 * i)].result
            outcomes[(lev, i)] = classify_split(par.d0_hat, left and left.d0_hat,
                                                right and right.d0_hat)
    return SplitTree(depth, nodes, outcomes)


def split_statistic_identity_check(x: TimeSeries, cfg: TestConfig, H, H1, H2, r: int = 1) -> float:
    """Residual of ``xi_H = xi_H1 sqrt(|H1|/|H|) + xi_H2 sqrt(|H2|/|H|)``.

    The children must tile ``H`` at a node of ``H``'s quadrature grid.
    """
    a, b = H
    if not (abs(H1[0] - a) < _NODE_EPS and abs(H2[1] - b) < _NODE_EPS
            and abs(H1[1] - H2[0]) < _NODE_EPS):
        raise DomainError("H1 and H2 must tile H")
    full = replace(cfg, interval=(a, b))
    k, gg = _prepare(x, full)
    g1 = gg.restrict(*H1)
    g2 = gg.restrict(*H2)
    s = _global_stats(gg, k)[r - 1]
    s1 = _global_stats(g1, k)[r - 1]
    s2 = _global_stats(g2, k)[r - 1]
    L, L1, L2 = b - a, H1[1] - H1[0], H2[1] - H2[0]
    return float(abs(s - (s1 * math.sqrt(L1 / L) + s2 * math.sqrt(L2 / L))))

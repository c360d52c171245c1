"""Varying-covariance models, data generation, discrepancy measures and
Monte Carlo studies.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .dimension import TestConfig, global_dimension
from .errors import DomainError, EmptyPool, ModelError, SSAError
from .kernel import TimeSeries
from .numeric import child_seeds, make_rng, spd_sqrt, sym, sym_eigvals
from .pseudonull import RankedEigen, enumerate_from_ranked
from .subspace import Subspace, canonical_angles, estimate_stationary_subspace


@dataclass(frozen=True)
class TruthSegment:
    """Annotated dimensions on ``(lo, hi)``."""

    lo: float
    hi: float
    d0: int
    dpm: int
    d: int


@dataclass(frozen=True)
class VCModelSpec:
    """A model ``X_t = A(t/T) Y_t`` given through ``A^2(u)``."""

    name: str
    p: int
    a2_fn: Callable[[float], np.ndarray]
    truth: tuple[TruthSegment, ...] = ()
    breakpoints: tuple[float, ...] = ()

    def a2(self, u) -> np.ndarray:
        return sym(np.asarray(self.a2_fn(float(u)), dtype=float))

    def a2_grid(self, us) -> np.ndarray:
        return np.stack([self.a2(u) for u in np.atleast_1d(us)])

    @property
    def abar2(self) -> np.ndarray:
        return _abar2(self)

    def m(self, u) -> np.ndarray:
        """Population deviation matrix ``A^2(u) - int_0^1 A^2``."""
        return sym(self.a2(u) - self.abar2)

    def truth_at(self, u: float) -> TruthSegment:
        for seg in self.truth:
            if seg.lo <= u <= seg.hi:
                return seg
        raise DomainError(f"no truth annotation at u={u}")

    @property
    def global_truth(self) -> TruthSegment:
        if len(self.truth) != 1:
            raise DomainError(f"model {self.name} has u-dependent dimensions")
        return self.truth[0]

    def check(self, probes: int = 101) -> None:
        """Raise ModelError unless A^2 is symmetric PSD on a midpoint probe grid."""
        us = (np.arange(probes) + 0.5) / probes
        w = sym_eigvals(self.a2_grid(us))
        if np.any(w < -1e-12):
            raise ModelError(f"A^2(u) of model {self.name} is not positive semi-definite")


_ABAR_CACHE: dict = {}


def _abar2(spec: VCModelSpec) -> np.ndarray:
    key = id(spec.a2_fn)
    if key not in _ABAR_CACHE:
        pts = [0.0, *spec.breakpoints, 1.0]
        total = np.zeros((spec.p, spec.p))
        for lo, hi in zip(pts[:-1], pts[1:]):
            val, _ = integrate.quad_vec(lambda u: spec.a2(u), lo, hi, epsabs=1e-13, epsrel=1e-12)
            total += val
        _ABAR_CACHE[key] = (spec.a2_fn, sym(total))
    return _ABAR_CACHE[key][1]


def _s(u: float) -> float:
    return math.sin(2.0 * math.pi * u)


def _model1(u):
    s = _s(u)
    return np.diag([2.0 + 0.5 * s, 3.0 - s, 1.5 + s])


def _model2(u):
    return np.diag([3.0 - 2.0 * u, 3.0, 4.0])


def _model3(u):
    s = _s(u)
    return np.array([[math.e, 1.0, 0.0, 0.0],
                     [1.0, 2.0 + s, 0.0, 0.0],
                     [0.0, 0.0, 3.0 - 2.0 * u, 0.5],
                     [0.0, 0.0, 0.5, 3.0 - s]])


def _model4(u, rho=0.5):
    r1, r2, r3 = rho, rho**2, rho**3
    return np.array([[math.exp(u), r1, r2, r3],
                     [r1, 1.0, r1, r2],
                     [r2, r1, 4.0, r1],
                     [r3, r2, r1, math.e]])


def _model5(u):
    s = _s(u)
    if u <= 0.5:
        return np.diag([2.0 + s, 2.0901, 3.0])
    return np.diag([2.0 + s, 4.0 + 3.0 * s, 3.0])


def _model6(u):
    a22 = 3.125 if u <= 0.5 else 3.0 * u * u + 2.0 * u
    return np.array([[4.0, 0.5, 0.0], [0.5, a22, 0.0], [0.0, 0.0, 1.0]])


def _ex31(u):
    s = _s(u)
    return np.diag([2.0 + s, 3.0 - s, 1.0 + s])


def _stationary(p):
    def fn(u):
        return np.eye(p)
    return fn


_BUILTIN = {
    "1": lambda: VCModelSpec("1", 3, _model1, (TruthSegment(0, 1, 0, 1, 1),)),
    "2": lambda: VCModelSpec("2", 3, _model2, (TruthSegment(0, 1, 2, 0, 2),)),
    "3": lambda: VCModelSpec("3", 4, _model3, (TruthSegment(0, 1, 1, 1, 2),)),
    "4": lambda: VCModelSpec("4", 4, _model4, (TruthSegment(0, 1, 3, 0, 3),)),
    "5": lambda: VCModelSpec("5", 3, _model5, (TruthSegment(0, 0.5, 2, 0, 2),
                                               TruthSegment(0.5, 1, 1, 1, 2)), (0.5,)),
    "6": lambda: VCModelSpec("6", 3, _model6, (TruthSegment(0, 0.5, 3, 0, 3),
                                               TruthSegment(0.5, 1, 2, 0, 2)), (0.5,)),
    "ex3.1": lambda: VCModelSpec("ex3.1", 3, _ex31, (TruthSegment(0, 1, 0, 1, 1),)),
    "ex5.1": lambda: VCModelSpec("ex5.1", 3, _model1, (TruthSegment(0, 1, 0, 1, 1),)),
    "stationary": lambda: VCModelSpec("stationary", 3, _stationary(3),
                                      (TruthSegment(0, 1, 3, 0, 3),)),
}
_MODEL_CACHE: dict = {}

BUILTIN_IDS = tuple(_BUILTIN)


def builtin_model(model_id) -> VCModelSpec:
    """One of the builtin models ``1``-``6``, ``"ex3.1"``, ``"ex5.1"`` or ``"stationary"``.

    At a breakpoint ``u = 0.5`` piecewise models use their left branch.
    """
    key = str(model_id)
    if key not in _BUILTIN:
        raise DomainError(f"unknown model {model_id!r}; choose from {', '.join(_BUILTIN)}")
    if key not in _MODEL_CACHE:
        _MODEL_CACHE[key] = _BUILTIN[key]()
    return _MODEL_CACHE[key]


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(0 if rng is None else int(rng))


def simulate_vc(spec: VCModelSpec, T: int, rng=None, innovations: str = "gaussian") -> TimeSeries:
    """Draw ``X_t = A(t/T) Y_t``, ``t = 1..T``, with ``A`` the symmetric square root of ``A^2``.

    ``innovations`` is ``"gaussian"`` or ``"rademacher"``.
    """
    if T < 8:
        raise DomainError("T must be at least 8")
    rng = _as_rng(rng)
    us = np.arange(1, T + 1) / T
    a2 = spec.a2_grid(us)
    w = sym_eigvals(a2)
    if np.any(w < -1e-12 * np.maximum(1.0, np.abs(w).max())):
        raise ModelError(f"A^2(u) of model {spec.name} is not positive semi-definite")
    a = spd_sqrt(a2)
    if innovations == "gaussian":
        y = rng.standard_normal((T, spec.p))
    elif innovations == "rademacher":
        y = rng.choice(np.array([-1.0, 1.0]), size=(T, spec.p))
    else:
        raise DomainError(f"unknown innovations {innovations!r}")
    return TimeSeries(np.einsum("tij,tj->it", a, y))


# ---------------------------------------------------------------- discrepancies


def dft(y: TimeSeries | np.ndarray) -> np.ndarray:
    """``J(omega_k) = T^{-1/2} sum_{t=1}^T Y_t exp(-i omega_k t)`` for ``k = 0..T-1``; shape (d, T)."""
    data = y.data if isinstance(y, TimeSeries) else np.atleast_2d(np.asarray(y, dtype=float))
    T = data.shape[1]
    phase = np.exp(-2j * np.pi * np.arange(T) / T)
    return np.fft.fft(data, axis=1) * phase / math.sqrt(T)


def dft_covariances(y, m_lags: int = 3) -> list[np.ndarray]:
    """Lag-r DFT covariances ``(1/T) sum_k J(w_k) J(w_{k+r})^*`` for ``r = 1..m``."""
    J = dft(y)
    T = J.shape[1]
    return [J @ np.roll(J, -r, axis=1).conj().T / T for r in range(1, m_lags + 1)]


def discrepancy_d1(y, m_lags: int = 3) -> float:
    """Sum over lags of squared Frobenius norms of real and imaginary DFT covariance parts."""
    if m_lags < 1:
        raise DomainError("m_lags must be >= 1")
    return float(sum(np.sum(g.real**2) + np.sum(g.imag**2) for g in dft_covariances(y, m_lags)))


def discrepancy_d2(b1, spec: VCModelSpec, u_grid) -> float:
    """``sum_k ||B^T M(u_k) B||_F`` with the population ``M``."""
    b = b1.basis if isinstance(b1, Subspace) else np.asarray(b1, dtype=float)
    b = b[:, None] if b.ndim == 1 else b
    return float(sum(np.linalg.norm(b.T @ spec.m(u) @ b) for u in np.atleast_1d(u_grid)))


def discrepancy_d3(b1, b_true) -> float:
    """``sqrt(sum_j sin^2 theta_j)`` over the canonical angles."""
    return float(np.sqrt(np.sum(np.sin(canonical_angles(b1, b_true)) ** 2)))


@dataclass(frozen=True)
class DiscrepancyReport:
    d1: float
    d2: float
    d3: float


def population_11_subspaces(spec: VCModelSpec, u_grid=None, both_signs: bool = True,
                            tol: float = 1e-8) -> list[np.ndarray]:
    """Distinct population (1,1)-subspaces stationary over the whole of (0, 1).

    Spaces of every ``M(u)`` with the annotated dimension on ``u_grid`` are
    pooled and kept if ``||B^T M(v) B||_F <= tol`` at every probe ``v``.  If no
    space survives, the whole pool is returned.
    """
    us = np.linspace(0.02, 0.98, 49) if u_grid is None else np.atleast_1d(u_grid)
    probes = (np.arange(101) + 0.5) / 101
    mp = np.stack([spec.m(v) for v in probes])
    pool, stationary = [], []
    for i, u in enumerate(us):
        seg = spec.truth_at(u)
        ranked = RankedEigen.from_matrix(spec.m(u))
        if ranked.inertia.d != seg.d or ranked.inertia.d == 0:
            continue
        for space in enumerate_from_ranked(ranked, 4096, both_signs, seed=i):
            b = space.columns
            if any(_same_span(b, c) for c in pool):
                continue
            pool.append(b)
            resid = np.linalg.norm(np.einsum("ji,vjk,kl->vil", b, mp, b), axis=(1, 2))
            if np.all(resid <= tol * max(1.0, np.abs(mp).max())):
                stationary.append(b)
    return stationary or pool


def _same_span(b1, b2, tol: float = 1e-8) -> bool:
    return b1.shape == b2.shape and canonical_angles(b1, b2)[-1] < tol


# ------------------------------------------------------------ Monte Carlo study


@dataclass(frozen=True)
class MonteCarloStudy:
    model: str
    T_values: tuple[int, ...]
    reps: int
    seed: int = 0
    config: TestConfig = field(default_factory=TestConfig)
    compute_d3: bool = False
    theta0: float = math.radians(20.0)

    def __post_init__(self):
        if self.reps < 1:
            raise DomainError("reps must be >= 1")
        builtin_model(self.model)


def _replicate(args):
    study, T, rep, seed = args
    spec = builtin_model(study.model)
    x = simulate_vc(spec, T, make_rng(seed))
    row = {"model": study.model, "T": T, "rep": rep, "seed": seed}
    try:
        res = global_dimension(x, study.config)
        row.update(d0=res.d0_hat, dplus=res.dplus_hat, dminus=res.dminus_hat, d=res.d_hat,
                   status="ok")
    except SSAError as exc:
        row.update(d0=-1, dplus=-1, dminus=-1, d=-1, status=type(exc).__name__)
    if study.compute_d3:
        try:
            est, _ = estimate_stationary_subspace(x, study.config, theta0=study.theta0)
            truths = population_11_subspaces(spec)
            row["d3"] = min(discrepancy_d3(est.basis, b) for b in truths)
        except EmptyPool:
            row["d3"] = float("nan")
    return row


def _summarize(rows, spec: VCModelSpec, compute_d3: bool):
    out = {}
    truth_d = spec.truth[0].d if len(spec.truth) == 1 else None
    for T in sorted({r["T"] for r in rows}):
        sub = [r for r in rows if r["T"] == T]
        ds = [r["d"] for r in sub]
        counts = Counter(ds)
        modal = min(counts, key=lambda v: (-counts[v], v))
        hist = [counts.get(v, 0) for v in range(spec.p + 1)]
        d0_counts = Counter(r["d0"] for r in sub)
        entry = {"reps": len(sub), "modal_d": modal, "d_hist": hist,
                 "d0_hist": [d0_counts.get(v, 0) for v in range(spec.p + 1)]}
        if truth_d is not None:
            entry["match_rate"] = float(np.mean([d == truth_d for d in ds]))
        if compute_d3:
            vals = np.array([r["d3"] for r in sub], dtype=float)
            ok = vals[np.isfinite(vals)]
            entry["d3_mean"] = float(ok.mean()) if ok.size else float("nan")
            entry["d3_sd"] = float(ok.std(ddof=1)) if ok.size > 1 else float("nan")
            entry["d3_missing"] = int(vals.size - ok.size)
        out[int(T)] = entry
    return out


def run_mc_study(study: MonteCarloStudy, jobs: int = 1):
    """Run every (T, replication) and return ``(rows, summary)``.

    Replication seeds are derived from ``study.seed`` so results do not depend
    on ``jobs``.
    """
    seeds = child_seeds(study.seed, len(study.T_values) * study.reps)
    tasks = [(study, T, rep, seeds[i * study.reps + rep])
             for i, T in enumerate(study.T_values) for rep in range(study.reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_replicate, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        rows = [_replicate(t) for t in tasks]
    return rows, _summarize(rows, builtin_model(study.model), study.compute_d3)


# ------------------------------------------------------- classification features


def periodogram(y) -> np.ndarray:
    """``I(w_k) = J(w_k) J(w_k)^*`` for ``k = 0..T-1``; shape (T, d, d)."""
    J = dft(y)
    return np.einsum("ik,jk->kij", J, J.conj())


def smoothed_periodogram(y, span: int | None = None) -> np.ndarray:
    """Periodogram averaged over a centered circular window of ``span`` bins."""
    I = periodogram(y)
    T = I.shape[0]
    if span is None:
        span = 2 * int(math.isqrt(T) // 2) + 1
    if span < 1 or span % 2 == 0:
        raise DomainError("span must be a positive odd integer")
    half = span // 2
    csum = np.cumsum(np.concatenate([I[-half:], I, I[:half]]) if half else I, axis=0)
    csum = np.concatenate([np.zeros((1,) + I.shape[1:], dtype=I.dtype), csum])
    return (csum[span:span + T] - csum[:T]) / span


def classification_features(trials, labels, leave_one_out: bool = False, span: int | None = None
                            ) -> np.ndarray:
    """Distances of every trial's spectral matrices to the two class averages.

    Returns an ``(n_trials, 2)`` array whose column ``c`` is the mean over
    frequencies ``w_k``, ``k = 1..floor(T/2)``, of ``||g_j(w_k) - gbar_c(w_k)||_F^2``.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size != 2:
        raise DomainError("need exactly two classes")
    series = [t if isinstance(t, TimeSeries) else TimeSeries(t) for t in trials]
    if len(series) != labels.size:
        raise DomainError("one label per trial required")
    if len({s.T for s in series}) != 1:
        raise DomainError("trials must share a common length")
    for c in classes:
        if np.sum(labels == c) < 2:
            raise DomainError(f"class {c!r} has fewer than 2 trials")
    T = series[0].T
    g = np.stack([smoothed_periodogram(s, span)[1:T // 2 + 1] for s in series])
    sums = {c: g[labels == c].sum(axis=0) for c in classes}
    counts = {c: int(np.sum(labels == c)) for c in classes}
    feats = np.empty((len(series), 2))
    for j in range(len(series)):
        for col, c in enumerate(classes):
            if leave_one_out and labels[j] == c:
                center = (sums[c] - g[j]) / (counts[c] - 1)
            else:
                center = sums[c] / counts[c]
            feats[j, col] = float(np.mean(np.sum(np.abs(g[j] - center) ** 2, axis=(1, 2))))
    return feats

"""Stationary subspace estimation by clustering local (1,1)-subspaces.

Local (1,1)-pseudo null spaces of the estimated ``M(u)`` are pooled across a
grid of ``u`` values.  Two pooled subspaces are joined by an edge when their
largest canonical angle is below ``theta0``.  The graph is clustered with a
random-walk agglomerative method (Walktrap) cut at maximum modularity, and
the center of the densest cluster is the estimate.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .dimension import TestConfig, global_dimension, local_dpm, sequential_local_d0, _xi_from_gamma
from .errors import DomainError, EmptyPool
from .kernel import TimeSeries, estimate_m_grid
from .numeric import canonical_signs, sym_eigvals
from .pseudonull import RankedEigen, enumerate_from_ranked, sample_ranked_eigen

DEFAULT_THETA0 = math.radians(20.0)
DENSENESS_FLOOR = 1e-9


@dataclass(frozen=True)
class Subspace:
    """Orthonormal basis of a subspace of R^p with its provenance."""

    basis: np.ndarray
    origin_u: float = float("nan")
    pairing_id: int = 0

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.ndim != 2 or not 1 <= b.shape[1] <= b.shape[0]:
            raise DomainError(f"basis must be p x d with 1 <= d <= p, got {b.shape}")
        if np.max(np.abs(b.T @ b - np.eye(b.shape[1]))) > 1e-10:
            raise DomainError("basis columns must be orthonormal")
        b = canonical_signs(b)
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def p(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


def _as_basis(b) -> np.ndarray:
    if isinstance(b, Subspace):
        return b.basis
    a = np.asarray(b, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def canonical_angles(b1, b2) -> np.ndarray:
    """Ascending canonical angles between two subspaces (``min(d1, d2)`` of them).

    Cosines come from the singular values of ``B1^T B2``; angles below pi/4
    are recomputed from the sines (singular values of the component of the
    smaller basis orthogonal to the larger one) for accuracy near zero.
    """
    x, y = _as_basis(b1), _as_basis(b2)
    if x.shape[0] != y.shape[0]:
        raise DomainError(f"ambient dimensions differ: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[1] < y.shape[1]:
        x, y = y, x
    cos = np.clip(np.linalg.svd(x.T @ y, compute_uv=False), 0.0, 1.0)
    sin = np.clip(np.linalg.svd(y - x @ (x.T @ y), compute_uv=False)[::-1], 0.0, 1.0)
    theta = np.arccos(cos)
    small = theta < math.pi / 4
    theta[small] = np.arcsin(sin[small])
    return np.sort(theta)


def max_angle(b1, b2) -> float:
    return float(canonical_angles(b1, b2)[-1])


@dataclass(frozen=True)
class SubspaceGraph:
    vertices: tuple[Subspace, ...]
    adjacency: np.ndarray
    angles: np.ndarray
    theta0: float

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


def angle_matrix(subspaces) -> np.ndarray:
    n = len(subspaces)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = max_angle(subspaces[i], subspaces[j])
    return out


def build_graph(subspaces, theta0: float = DEFAULT_THETA0) -> SubspaceGraph:
    """Edge between two subspaces iff their largest canonical angle is below ``theta0``."""
    verts = tuple(s if isinstance(s, Subspace) else Subspace(s) for s in subspaces)
    if not verts:
        raise DomainError("need at least one subspace")
    ang = angle_matrix(verts)
    adj = ang < theta0
    np.fill_diagonal(adj, False)
    return SubspaceGraph(verts, adj, ang, float(theta0))


def connected_components(adj: np.ndarray) -> list[list[int]]:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in np.flatnonzero(adj[v]):
                if not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
        comps.append(sorted(comp))
    return comps


def modularity(adj: np.ndarray, clusters) -> float:
    """Newman-Girvan modularity of a partition of an unweighted graph."""
    a = np.asarray(adj, dtype=float)
    two_m = a.sum()
    if two_m == 0:
        return 0.0
    deg = a.sum(axis=1)
    q = 0.0
    for c in clusters:
        idx = np.asarray(list(c), dtype=int)
        q += a[np.ix_(idx, idx)].sum() / two_m - (deg[idx].sum() / two_m) ** 2
    return float(q)


def walktrap_cluster(g, walk_length: int = 4) -> list[list[int]]:
    """Walktrap communities of ``g`` (a SubspaceGraph or boolean adjacency matrix).

    Communities start as singletons.  At each step the pair of adjacent
    communities with the smallest increase

        (1/n) |C1||C2| / (|C1| + |C2|) * ||D^{-1/2} (P^t_C1 - P^t_C2)||^2

    is merged, ties broken by the smallest vertex labels.  The partition
    with the highest modularity along the merge sequence is returned (the
    coarser one on exact ties), each cluster sorted and clusters ordered by
    their smallest vertex.
    """
    if walk_length < 1:
        raise DomainError("walk_length must be >= 1")
    adj = np.asarray(g.adjacency if isinstance(g, SubspaceGraph) else g, dtype=bool)
    n = adj.shape[0]
    if n == 0:
        return []
    a = adj.astype(float)
    deg = a.sum(axis=1)
    safe = np.where(deg > 0, deg, 1.0)
    P = a / safe[:, None]
    Pt = np.linalg.matrix_power(P, walk_length)
    scale = 1.0 / np.sqrt(safe)

    comm = {i: [i] for i in range(n)}
    prob = {i: Pt[i] * scale for i in range(n)}
    nbrs = {i: set(int(j) for j in np.flatnonzero(adj[i])) for i in range(n)}

    def delta(c1, c2):
        s1, s2 = len(comm[c1]), len(comm[c2])
        diff = prob[c1] - prob[c2]
        return (s1 * s2 / (s1 + s2)) * float(diff @ diff) / n

    key = lambda c1, c2: (min(c1, c2), max(c1, c2))
    deltas = {}
    for i in range(n):
        for j in nbrs[i]:
            if i < j:
                deltas[(i, j)] = delta(i, j)

    def label(c):
        return min(comm[c])

    best_q = modularity(adj, comm.values())
    best = [sorted(v) for v in comm.values()]
    next_id = n
    while deltas:
        (c1, c2), _ = min(deltas.items(),
                          key=lambda kv: (kv[1], sorted((label(kv[0][0]), label(kv[0][1])))))
        s1, s2 = len(comm[c1]), len(comm[c2])
        new = next_id
        next_id += 1
        comm[new] = comm.pop(c1) + comm.pop(c2)
        prob[new] = (s1 * prob.pop(c1) + s2 * prob.pop(c2)) / (s1 + s2)
        nb = (nbrs.pop(c1) | nbrs.pop(c2)) - {c1, c2}
        nbrs[new] = nb
        for pair in [pk for pk in deltas if c1 in pk or c2 in pk]:
            del deltas[pair]
        for c in nb:
            nbrs[c] -= {c1, c2}
            nbrs[c].add(new)
            deltas[key(c, new)] = delta(c, new)
        q = modularity(adj, comm.values())
        if q >= best_q - 1e-12:
            best_q = max(q, best_q)
            best = [sorted(v) for v in comm.values()]
    return sorted(best, key=lambda c: c[0])


def cluster_center(g: SubspaceGraph, cluster) -> int:
    """Member minimizing the summed sine of its largest angles to the other members."""
    idx = list(cluster)
    if not idx:
        raise DomainError("empty cluster")
    sub = np.sin(g.angles[np.ix_(idx, idx)])
    scores = sub.sum(axis=1)
    best = float(np.min(scores))
    for v, s in zip(idx, scores):
        if s <= best + 1e-12:
            return int(v)
    raise AssertionError("unreachable")


def cluster_denseness(g: SubspaceGraph, cluster) -> float:
    """Mean log within-cluster degree over the mean within-cluster sine distance."""
    idx = list(cluster)
    if len(idx) < 2:
        raise DomainError("denseness needs a cluster of size >= 2")
    sub_adj = g.adjacency[np.ix_(idx, idx)]
    deg = sub_adj.sum(axis=1)
    if np.any(deg < 1):
        raise DomainError("every cluster member needs a neighbour inside the cluster")
    sines = np.sin(g.angles[np.ix_(idx, idx)])
    spread = float(np.mean(sines.sum(axis=1) / (len(idx) - 1)))
    return float(np.mean(np.log(deg))) / max(spread, DENSENESS_FLOOR)


@dataclass(frozen=True)
class ClusterReport:
    """Clusters of size >= 3 with their centers and denseness.

    ``small_clusters`` keeps the remaining clusters for diagnostics.  When no
    cluster reaches size 3 the largest cluster is used and ``fallback`` is set.
    """

    clusters: tuple[tuple[int, ...], ...]
    centers: tuple[int, ...]
    denseness: tuple[float, ...]
    selected: int
    small_clusters: tuple[tuple[int, ...], ...] = ()
    u_proportions: tuple[float, ...] = ()
    fallback: bool = False

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.clusters)


def _u_proportions(g: SubspaceGraph, clusters) -> tuple[float, ...]:
    all_u = {v.origin_u for v in g.vertices}
    total = len(all_u)
    return tuple(len({g.vertices[i].origin_u for i in c}) / total for c in clusters)


def cluster_report(g: SubspaceGraph, walk_length: int = 4, min_size: int = 3) -> ClusterReport:
    parts = walktrap_cluster(g, walk_length)
    big = [tuple(c) for c in parts if len(c) >= min_size]
    small = tuple(tuple(c) for c in parts if len(c) < min_size)
    fallback = False
    if not big:
        fallback = True
        largest = max(parts, key=lambda c: (len(c), -c[0]))
        big = [tuple(largest)]
        small = tuple(c for c in small if c != tuple(largest))
    centers = tuple(cluster_center(g, c) for c in big)
    dense = tuple(cluster_denseness(g, c) if len(c) >= 2 else 0.0 for c in big)
    selected = int(np.argmax(dense))
    return ClusterReport(tuple(big), centers, dense, selected, small, _u_proportions(g, big),
                         fallback)


@dataclass(frozen=True)
class SubspaceEstimate:
    basis: np.ndarray
    vertex: int
    origin_u: float
    candidates: tuple[np.ndarray, ...] = ()
    n_pool: int = 0
    theta0: float = DEFAULT_THETA0
    graph: SubspaceGraph | None = field(default=None, repr=False, compare=False)

    @property
    def d(self) -> int:
        return self.basis.shape[1]


def default_u_grid(h: float, n: int = 24) -> np.ndarray:
    return np.linspace(h + 0.02, 1.0 - h - 0.02, n)


def subspaces_from_ranked(ranked: RankedEigen, u: float, cap: int, both_signs: bool,
                          seed: int = 0) -> list[Subspace]:
    if ranked.zero_vecs.shape[1] + ranked.dpm == 0:
        return []
    enum = enumerate_from_ranked(ranked, cap, both_signs, seed)
    return [Subspace(s.columns, float(u), i) for i, s in enumerate(enum)]


def sample_11_pool(x: TimeSeries, cfg: TestConfig, u_grid=None, cap: int = 512,
                   both_signs: bool = True, d0_fixed: int | None = None) -> list[Subspace]:
    """Sample (1,1)-local subspaces pooled over ``u_grid``.

    The null block size at each ``u`` is ``d0_fixed`` when given and the local
    sequential estimate otherwise; the remaining eigenvalues are split by sign.
    """
    k = cfg.kernel(x.T)
    us = default_u_grid(k.h) if u_grid is None else np.atleast_1d(np.asarray(u_grid, float))
    mu4 = cfg.resolve_mu4(x, k).value
    est = estimate_m_grid(x, us, k)
    gamma = sym_eigvals(est.standardized)
    xi = _xi_from_gamma(gamma, x.T, k, mu4)
    alpha = cfg.effective_alpha(x.T)
    pool = []
    for i, u in enumerate(us):
        d0 = sequential_local_d0(xi[i], alpha) if d0_fixed is None else int(d0_fixed)
        dplus, dminus = local_dpm(gamma[i], d0)
        ranked = sample_ranked_eigen(est.m_hat[i], d0, dplus, dminus)
        pool.extend(subspaces_from_ranked(ranked, u, cap, both_signs, seed=i))
    return pool


def population_11_pool(m_fn, u_grid, cap: int = 512, both_signs: bool = False,
                       zero_tol: float | None = None) -> list[Subspace]:
    """(1,1)-pseudo null spaces of exact matrices ``m_fn(u)`` pooled over ``u_grid``."""
    pool = []
    for i, u in enumerate(u_grid):
        ranked = RankedEigen.from_matrix(m_fn(u), zero_tol)
        pool.extend(subspaces_from_ranked(ranked, u, cap, both_signs, seed=i))
    return pool


def select_from_pool(pool, theta0: float = DEFAULT_THETA0, walk_length: int = 4):
    if not pool:
        raise EmptyPool("no (1,1)-subspace was found at any u")
    g = build_graph(pool, theta0)
    rep = cluster_report(g, walk_length)
    v = rep.centers[rep.selected]
    cands = tuple(g.vertices[c].basis for c in rep.centers)
    est = SubspaceEstimate(g.vertices[v].basis, v, g.vertices[v].origin_u, cands, g.n, theta0, g)
    return est, rep


def estimate_stationary_subspace(x: TimeSeries, cfg: TestConfig | None = None, u_grid=None,
                                 theta0: float = DEFAULT_THETA0, cap: int = 512,
                                 walk_length: int = 4, both_signs: bool = True,
                                 target_dim="global", d0_source: str = "global"):
    """Estimate a stationary subspace of ``x``.

    Parameters
    ----------
    cfg : TestConfig, optional
        Bandwidth, level and mu4 for the local dimension tests at each ``u``.
    u_grid : array_like, optional
        Rescaled times; 24 equispaced points in ``[h + 0.02, 1 - h - 0.02]``
        by default.
    theta0 : float
        Edge threshold in radians.
    cap : int
        Maximum number of (1,1)-subspaces enumerated per ``u``.
    both_signs : bool
        Include both mixtures ``a s_+ +/- b s_-`` of every pair.
    target_dim : "global", int or None
        Keep only pooled subspaces of this dimension.  ``"global"`` uses the
        global estimate of ``d`` on ``cfg``'s interval and falls back to the
        most frequent pooled dimension when no subspace has that size.
        ``None`` keeps everything.
    d0_source : {"global", "local"}
        Null block size per ``u``: the global estimate of ``d0`` (the
        stationary subspace is common to all ``u``) or the local sequential
        test at that ``u``.

    Returns
    -------
    (SubspaceEstimate, ClusterReport)

    Raises
    ------
    EmptyPool
        If no ``u`` produced a subspace of positive dimension.
    """
    cfg = TestConfig() if cfg is None else cfg
    if d0_source not in ("global", "local"):
        raise DomainError(f"unknown d0_source {d0_source!r}")
    glob = None
    if d0_source == "global" or target_dim == "global":
        glob = global_dimension(x, cfg)
    d0_fixed = glob.d0_hat if d0_source == "global" else None
    pool = sample_11_pool(x, cfg, u_grid, cap, both_signs, d0_fixed)
    if target_dim is not None and pool:
        want = glob.d_hat if target_dim == "global" else int(target_dim)
        kept = [s for s in pool if s.d == want]
        if not kept and target_dim == "global":
            dims = Counter(s.d for s in pool)
            want = min(dims, key=lambda v: (-dims[v], v))
            kept = [s for s in pool if s.d == want]
        pool = kept
    return select_from_pool(pool, theta0, walk_length)

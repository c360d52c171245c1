"""Inertia, pseudo nullity and (1,1)-pseudo null spaces of symmetric matrices.

For a symmetric ``M`` with inertia ``(d0, d+, d-)`` the largest ``d`` for
which an orthonormal ``p x d`` matrix ``C`` with ``C^T M C = 0`` exists is
``d0 + min(d+, d-)``.  Such a ``C`` is built from the null eigenvectors plus
unit mixtures ``a s_+ + b s_-`` of one positive and one negative eigenvector,
with ``a^2 lam_+ + b^2 lam_- = 0``.

Eigenvalue bookkeeping
----------------------
Positive eigenvalues are ranked from the largest (rank 0) down, negative
eigenvalues from the most negative (rank 0) up.  A pairing maps positive
ranks to negative ranks injectively.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DomainError
from .numeric import EigenDecomposition, sym, sym_eigen


@dataclass(frozen=True)
class Inertia:
    d0: int
    d_plus: int
    d_minus: int
    zero_tol: float

    @property
    def p(self) -> int:
        return self.d0 + self.d_plus + self.d_minus

    @property
    def dpm(self) -> int:
        return min(self.d_plus, self.d_minus)

    @property
    def d(self) -> int:
        return self.d0 + self.dpm

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.d0, self.d_plus, self.d_minus)


def default_zero_tol(eigenvalues, rel: float = 1e-8) -> float:
    ev = np.asarray(eigenvalues, dtype=float)
    return rel * float(np.max(np.abs(ev))) if ev.size else 0.0


def _classify(eigenvalues: np.ndarray, tol: float):
    zero = (np.abs(eigenvalues) < tol) | (eigenvalues == 0.0)
    pos = (~zero) & (eigenvalues > 0)
    neg = (~zero) & (eigenvalues < 0)
    return zero, pos, neg


def inertia(m, zero_tol: float | None = None) -> Inertia:
    """Counts of zero, positive and negative eigenvalues of ``m``.

    ``zero_tol`` defaults to ``1e-8 * max |lambda|``.  An eigenvalue is a zero
    if its magnitude is below the tolerance (or exactly zero).
    """
    w = sym_eigen(m).eigenvalues
    return _inertia_from_eigenvalues(w, zero_tol)


def _inertia_from_eigenvalues(w, zero_tol):
    if zero_tol is None:
        zero_tol = default_zero_tol(w)
    if zero_tol < 0:
        raise DomainError("zero_tol must be nonnegative")
    zero, pos, neg = _classify(np.asarray(w), zero_tol)
    return Inertia(int(zero.sum()), int(pos.sum()), int(neg.sum()), float(zero_tol))


def pseudo_nullity(m, zero_tol: float | None = None) -> int:
    """d0 + min(d+, d-)."""
    return inertia(m, zero_tol).d


@dataclass(frozen=True)
class ZeroEigvec:
    """Column taken directly from the null eigenvector with rank ``index``."""

    index: int


@dataclass(frozen=True)
class PairedCombo:
    """Column ``alpha * s_+[pos] + beta * s_-[neg]``."""

    pos: int
    neg: int
    alpha: float
    beta: float


Source = Union[ZeroEigvec, PairedCombo]


def mixing_weights(lam_pos: float, lam_neg: float) -> tuple[float, float]:
    """Nonnegative ``(a, b)`` with ``a^2 + b^2 = 1`` and ``a^2 lam_pos + b^2 lam_neg = 0``."""
    if not (lam_pos > 0 and lam_neg < 0):
        raise DomainError("need one positive and one negative eigenvalue")
    total = lam_pos - lam_neg
    a2 = -lam_neg / total
    return math.sqrt(a2), math.sqrt(lam_pos / total)


@dataclass(frozen=True)
class OneOnePairing:
    pairs: tuple[tuple[int, int], ...]
    mixing: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pos = [a for a, _ in self.pairs]
        neg = [b for _, b in self.pairs]
        if len(set(pos)) != len(pos) or len(set(neg)) != len(neg):
            raise DomainError("pairing must be injective on both sides")
        if len(self.mixing) != len(self.pairs):
            raise DomainError("one mixing pair per eigen pair required")

    @classmethod
    def from_pairs(cls, pairs, lam_pos, lam_neg, signs=None) -> "OneOnePairing":
        """Attach mixing weights to ``pairs`` given ranked positive/negative eigenvalues.

        ``signs`` optionally flips the sign of ``b`` per pair, giving the
        alternative span ``a s_+ - b s_-``.
        """
        pairs = tuple((int(a), int(b)) for a, b in pairs)
        for a, b in pairs:
            if not (0 <= a < len(lam_pos) and 0 <= b < len(lam_neg)):
                raise DomainError(f"pair {(a, b)} out of range")
        if signs is None:
            signs = (1,) * len(pairs)
        mixing = []
        for (a, b), sgn in zip(pairs, signs):
            x, y = mixing_weights(lam_pos[a], lam_neg[b])
            mixing.append((x, y if sgn >= 0 else -y))
        return cls(pairs, tuple(mixing))

    @classmethod
    def default(cls, lam_pos, lam_neg) -> "OneOnePairing":
        m = min(len(lam_pos), len(lam_neg))
        return cls.from_pairs([(i, i) for i in range(m)], lam_pos, lam_neg)


@dataclass(frozen=True)
class RankedEigen:
    """Eigenpairs of a symmetric matrix split into zero / positive / negative groups."""

    zero_vals: np.ndarray
    zero_vecs: np.ndarray
    pos_vals: np.ndarray
    pos_vecs: np.ndarray
    neg_vals: np.ndarray
    neg_vecs: np.ndarray
    inertia: Inertia

    @classmethod
    def from_matrix(cls, m, zero_tol=None) -> "RankedEigen":
        return cls.from_decomposition(sym_eigen(m), zero_tol)

    @classmethod
    def from_decomposition(cls, dec: EigenDecomposition, zero_tol=None) -> "RankedEigen":
        w, v = dec
        inert = _inertia_from_eigenvalues(w, zero_tol)
        zero, pos, neg = _classify(w, inert.zero_tol)
        # ascending order: negatives already most-negative first; positives are reversed
        pidx = np.flatnonzero(pos)
        pidx = pidx[np.argsort(-w[pidx], kind="stable")]
        nidx = np.flatnonzero(neg)
        zidx = np.flatnonzero(zero)
        return cls(w[zidx], v[:, zidx], w[pidx], v[:, pidx], w[nidx], v[:, nidx], inert)

    @classmethod
    def from_blocks(cls, dec: EigenDecomposition, zero_idx, pos_idx, neg_idx) -> "RankedEigen":
        """Build from explicit eigen-index blocks (used for sample matrices)."""
        w, v = dec
        zero_idx = np.asarray(zero_idx, dtype=int)
        pos_idx = np.asarray(pos_idx, dtype=int)
        neg_idx = np.asarray(neg_idx, dtype=int)
        pos_idx = pos_idx[np.argsort(-w[pos_idx], kind="stable")]
        neg_idx = neg_idx[np.argsort(w[neg_idx], kind="stable")]
        if np.any(w[pos_idx] <= 0) or np.any(w[neg_idx] >= 0):
            raise DomainError("positive/negative blocks must carry eigenvalues of that sign")
        inert = Inertia(len(zero_idx), len(pos_idx), len(neg_idx), float("nan"))
        return cls(w[zero_idx], v[:, zero_idx], w[pos_idx], v[:, pos_idx], w[neg_idx],
                   v[:, neg_idx], inert)

    @property
    def p(self) -> int:
        return self.zero_vecs.shape[0]

    @property
    def dpm(self) -> int:
        return min(len(self.pos_vals), len(self.neg_vals))


@dataclass(frozen=True)
class PseudoNullBasis:
    """Orthonormal ``p x d`` matrix annihilating ``M`` plus the recipe for each column."""

    columns: np.ndarray
    sources: tuple[Source, ...]
    pairing: OneOnePairing | None = None

    @property
    def d(self) -> int:
        return self.columns.shape[1]

    @property
    def p(self) -> int:
        return self.columns.shape[0]


def basis_from_ranked(ranked: RankedEigen, pairing: OneOnePairing | None = None) -> PseudoNullBasis:
    if pairing is None:
        pairing = OneOnePairing.default(ranked.pos_vals, ranked.neg_vals)
    if len(pairing.pairs) != ranked.dpm:
        raise DomainError(f"pairing must contain {ranked.dpm} pairs, got {len(pairing.pairs)}")
    cols = [ranked.zero_vecs[:, i] for i in range(ranked.zero_vecs.shape[1])]
    sources: list[Source] = [ZeroEigvec(i) for i in range(len(cols))]
    for (a, b), (x, y) in zip(pairing.pairs, pairing.mixing):
        cols.append(x * ranked.pos_vecs[:, a] + y * ranked.neg_vecs[:, b])
        sources.append(PairedCombo(a, b, x, y))
    mat = np.column_stack(cols) if cols else np.zeros((ranked.p, 0))
    return PseudoNullBasis(mat, tuple(sources), pairing)


def construct_pseudo_null_basis(m, zero_tol: float | None = None,
                                pairing: OneOnePairing | Sequence[tuple[int, int]] | None = None
                                ) -> PseudoNullBasis:
    """Orthonormal basis of dimension ``d0 + min(d+, d-)`` with ``C^T M C = 0``.

    Parameters
    ----------
    m : array_like, shape (p, p)
    zero_tol : float, optional
        Eigenvalue zero threshold; see :func:`inertia`.
    pairing : OneOnePairing or sequence of (pos_rank, neg_rank), optional
        Default pairs the i-th largest positive eigenvalue with the i-th most
        negative one.  Mixing weights are always recomputed from ``m``.

    Examples
    --------
    >>> construct_pseudo_null_basis(np.diag([2.0, -1.0])).columns.ravel()
    array([0.57735027, 0.81649658])
    """
    ranked = RankedEigen.from_matrix(m, zero_tol)
    if pairing is not None:
        pairs = pairing.pairs if isinstance(pairing, OneOnePairing) else pairing
        signs = None
        if isinstance(pairing, OneOnePairing):
            signs = [1 if y >= 0 else -1 for _, y in pairing.mixing]
        pairing = OneOnePairing.from_pairs(pairs, ranked.pos_vals, ranked.neg_vals, signs)
    return basis_from_ranked(ranked, pairing)


def _unit(w) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if abs(np.linalg.norm(w) - 1.0) > 1e-8:
        raise DomainError("vector must have unit norm")
    return w


def is_pseudo_eigenvector(m, w, tol: float = 1e-8) -> bool:
    """True when ``|w^T M w| <= tol * ||M||_F`` for a unit vector ``w``."""
    a = sym(m)
    w = _unit(w)
    return bool(abs(w @ a @ w) <= tol * np.linalg.norm(a))


def same_pseudo_null_space(m, w1, w2, tol: float = 1e-8) -> bool:
    """Whether two pseudo eigenvectors can sit in a common pseudo null space.

    Both must be pseudo eigenvectors; the cross form ``w1^T M w2`` must then
    vanish as well.
    """
    a = sym(m)
    if not (is_pseudo_eigenvector(a, w1, tol) and is_pseudo_eigenvector(a, w2, tol)):
        raise DomainError("both vectors must be pseudo eigenvectors of m")
    return bool(abs(_unit(w1) @ a @ _unit(w2)) <= tol * np.linalg.norm(a))


def count_11_spaces(d_plus: int, d_minus: int, both_signs: bool = False) -> int:
    m = min(d_plus, d_minus)
    n = math.comb(d_plus, m) * math.comb(d_minus, m) * math.factorial(m)
    return n * (2**m if both_signs else 1)


@dataclass(frozen=True)
class SpaceEnumeration:
    """Enumerated (1,1)-pseudo null spaces; ``truncated`` marks a subsample."""

    spaces: tuple[PseudoNullBasis, ...]
    total: int
    truncated: bool

    def __len__(self) -> int:
        return len(self.spaces)

    def __iter__(self):
        return iter(self.spaces)

    def __getitem__(self, i):
        return self.spaces[i]


def _nth_partial_permutation(n: int, k: int, index: int) -> tuple[int, ...]:
    """The ``index``-th k-permutation of range(n) in lexicographic order."""
    pool = list(range(n))
    out = []
    for j in range(k):
        block = math.perm(n - j - 1, k - j - 1)
        q, index = divmod(index, block)
        out.append(pool.pop(q))
    return tuple(out)


def _decode_pairing(index: int, d_plus: int, d_minus: int, both_signs: bool):
    m = min(d_plus, d_minus)
    signs = [1] * m
    if both_signs:
        index, bits = divmod(index, 2**m)
        # bit j set => negative sign on pair j
        signs = [-1 if (bits >> (m - 1 - j)) & 1 else 1 for j in range(m)]
    if d_plus <= d_minus:
        negs = _nth_partial_permutation(d_minus, m, index)
        pairs = [(i, negs[i]) for i in range(m)]
    else:
        poss = _nth_partial_permutation(d_plus, m, index)
        pairs = [(poss[i], i) for i in range(m)]
    return pairs, signs


def enumerate_from_ranked(ranked: RankedEigen, cap: int = 512, both_signs: bool = False,
                          seed: int = 0) -> SpaceEnumeration:
    dp, dm = len(ranked.pos_vals), len(ranked.neg_vals)
    total = count_11_spaces(dp, dm, both_signs)
    if cap < 1:
        raise DomainError("cap must be positive")
    truncated = total > cap
    if truncated:
        indices = sorted(random.Random(seed).sample(range(total), cap))
    else:
        indices = range(total)
    spaces = []
    for idx in indices:
        pairs, signs = _decode_pairing(idx, dp, dm, both_signs)
        pairing = OneOnePairing.from_pairs(pairs, ranked.pos_vals, ranked.neg_vals, signs)
        spaces.append(basis_from_ranked(ranked, pairing))
    return SpaceEnumeration(tuple(spaces), total, truncated)


def enumerate_11_spaces(m, zero_tol: float | None = None, cap: int = 512,
                        both_signs: bool = False, seed: int = 0) -> SpaceEnumeration:
    """All (1,1)-pseudo null spaces of ``m`` (or a seeded subsample of ``cap``).

    There are ``C(d+, k) C(d-, k) k!`` of them with ``k = min(d+, d-)``.
    With ``both_signs`` each mixture also appears as ``a s_+ - b s_-``, which
    spans a different line, multiplying the count by ``2^k``.  When the count
    exceeds ``cap`` a deterministic subsample (driven by ``seed``) is returned
    with ``truncated=True``.
    """
    return enumerate_from_ranked(RankedEigen.from_matrix(m, zero_tol), cap, both_signs, seed)


def truncated_sample_counts(eigenvalues, d0_hat: int, dpm_hat: tuple[int, int]) -> tuple[int, int]:
    """Sign-consistent counts ``(d~+, d~-)`` for a sample matrix.

    ``d~+`` is the largest ``r <= d+^`` such that the top ``r`` eigenvalues are
    positive; ``d~-`` is the largest ``r <= d-^`` such that the bottom ``r``
    are negative.  ``eigenvalues`` must be ascending.
    """
    w = np.asarray(eigenvalues, dtype=float)
    dplus_hat, dminus_hat = dpm_hat
    if min(d0_hat, dplus_hat, dminus_hat) < 0 or d0_hat + dplus_hat + dminus_hat > w.size:
        raise DomainError("dimension estimates exceed p")
    top = w[::-1]
    dt_plus = 0
    while dt_plus < dplus_hat and top[dt_plus] > 0:
        dt_plus += 1
    dt_minus = 0
    while dt_minus < dminus_hat and w[dt_minus] < 0:
        dt_minus += 1
    return dt_plus, dt_minus


def sample_ranked_eigen(m_hat, d0_hat: int, dplus_hat: int, dminus_hat: int) -> RankedEigen:
    """Split the eigenpairs of an estimated matrix using estimated dimensions.

    The null block is the ``d0_hat`` middle eigenvalues at ascending positions
    ``[d-^, d-^ + d0^)``; the negative block is the first ``d~-`` positions
    and the positive block the last ``d~+``.
    """
    dec = sym_eigen(m_hat)
    w = dec.eigenvalues
    p = w.size
    if d0_hat + dplus_hat + dminus_hat != p:
        raise DomainError("d0 + d+ + d- must equal p")
    dt_plus, dt_minus = truncated_sample_counts(w, d0_hat, (dplus_hat, dminus_hat))
    zero_idx = np.arange(dminus_hat, dminus_hat + d0_hat)
    neg_idx = np.arange(dt_minus)
    pos_idx = np.arange(p - dt_plus, p)
    return RankedEigen.from_blocks(dec, zero_idx, pos_idx, neg_idx)


def all_pairings(d_plus: int, d_minus: int):
    """Iterate over pairings in the same order as :func:`enumerate_11_spaces`."""
    m = min(d_plus, d_minus)
    if d_plus <= d_minus:
        for negs in itertools.permutations(range(d_minus), m):
            yield [(i, negs[i]) for i in range(m)]
    else:
        for poss in itertools.permutations(range(d_plus), m):
            yield [(poss[i], i) for i in range(m)]

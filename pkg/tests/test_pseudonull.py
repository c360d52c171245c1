import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssavc.errors import DomainError
from ssavc.numeric import sym
from ssavc.pseudonull import (OneOnePairing, PairedCombo, ZeroEigvec, construct_pseudo_null_basis,
                              count_11_spaces, enumerate_11_spaces, inertia, is_pseudo_eigenvector,
                              mixing_weights, pseudo_nullity, same_pseudo_null_space,
                              sample_ranked_eigen, truncated_sample_counts)
from ssavc.subspace import max_angle

R2 = 1 / math.sqrt(2)
EX = np.diag([1.0, -1.0, 1.0])


def random_symmetric(rng, p):
    """Random symmetric matrix with a random number of exact zero eigenvalues."""
    q, _ = np.linalg.qr(rng.normal(size=(p, p)))
    w = rng.normal(size=p)
    w[rng.random(p) < 0.25] = 0.0
    return sym(q @ np.diag(w) @ q.T)


def assert_span_equal(a, b, atol=1e-10):
    a = a.reshape(len(a), -1)
    b = b.reshape(len(b), -1)
    np.testing.assert_allclose(a @ a.T, b @ b.T, atol=atol)


@pytest.mark.parametrize("m, expected", [
    (EX, (0, 2, 1)),
    (np.zeros((3, 3)), (3, 0, 0)),
    (np.diag([1.0, -2.0, 0.0, 3.0]), (1, 2, 1)),
])
def test_inertia_examples(m, expected):
    assert inertia(m, 1e-8).as_tuple() == expected


@pytest.mark.parametrize("m, expected", [(EX, 1), (np.eye(4), 0),
                                         (np.diag([1.0, -2.0, 0.0, 3.0]), 2)])
def test_pseudo_nullity_examples(m, expected):
    assert pseudo_nullity(m, 1e-8) == expected


def test_inertia_rejects_negative_tol():
    with pytest.raises(DomainError):
        inertia(EX, -1.0)


def test_basis_example_default_pairing():
    basis = construct_pseudo_null_basis(EX)
    assert basis.d == 1
    assert_span_equal(basis.columns, np.array([R2, R2, 0.0]))
    src = basis.sources[0]
    assert isinstance(src, PairedCombo) and (src.pos, src.neg) == (0, 0)


def test_basis_zero_matrix_is_everything():
    basis = construct_pseudo_null_basis(np.zeros((3, 3)))
    np.testing.assert_allclose(basis.columns.T @ basis.columns, np.eye(3))
    assert all(isinstance(s, ZeroEigvec) for s in basis.sources)


def test_basis_two_by_two_mixing():
    basis = construct_pseudo_null_basis(np.diag([2.0, -1.0]))
    np.testing.assert_allclose(basis.columns.ravel(), [math.sqrt(1 / 3), math.sqrt(2 / 3)])
    v = basis.columns.ravel()
    assert abs(v @ np.diag([2.0, -1.0]) @ v) < 1e-15


def test_basis_positive_definite_is_empty():
    basis = construct_pseudo_null_basis(np.eye(3))
    assert basis.columns.shape == (3, 0)


def test_custom_pairing():
    basis = construct_pseudo_null_basis(EX, pairing=[(1, 0)])
    assert_span_equal(basis.columns, np.array([0.0, R2, R2]))
    with pytest.raises(DomainError):
        construct_pseudo_null_basis(EX, pairing=[(2, 0)])


def test_pairing_must_be_injective():
    with pytest.raises(DomainError):
        OneOnePairing.from_pairs([(0, 0), (0, 1)], [1.0, 2.0], [-1.0, -2.0])


def test_mixing_weights_identities():
    rng = np.random.default_rng(3)
    for _ in range(100):
        lp, ln = rng.uniform(1e-3, 10), -rng.uniform(1e-3, 10)
        a, b = mixing_weights(lp, ln)
        assert a * a + b * b == pytest.approx(1.0, abs=1e-12)
        assert a * a * lp + b * b * ln == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(DomainError):
        mixing_weights(1.0, 1.0)


def test_constructive_basis_on_random_matrices():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        p = int(rng.integers(1, 9))
        m = random_symmetric(rng, p)
        basis = construct_pseudo_null_basis(m)
        c = basis.columns
        assert c.shape[1] == pseudo_nullity(m)
        np.testing.assert_allclose(c.T @ c, np.eye(c.shape[1]), atol=1e-10)
        assert np.linalg.norm(c.T @ m @ c) <= 1e-8 * max(np.linalg.norm(m), 1e-300)


def test_no_larger_pseudo_null_space_among_random_candidates():
    # Poincare separation caps the dimension; try to falsify it stochastically
    rng = np.random.default_rng(77)
    for _ in range(20):
        p = int(rng.integers(2, 7))
        m = random_symmetric(rng, p)
        d = pseudo_nullity(m)
        if d >= p:
            continue
        k = d + 1
        tol = 1e-8 * np.linalg.norm(m)
        c, _ = np.linalg.qr(rng.normal(size=(10_000, p, k)))
        base = construct_pseudo_null_basis(m).columns
        if d:
            # candidates that extend the true basis by one random direction
            z = rng.normal(size=(10_000, p, 1))
            z -= base @ (base.T @ z)
            c[:5000] = np.concatenate([np.broadcast_to(base, (10_000, p, d)), z], axis=2)[:5000]
            c[:5000, :, -1] /= np.linalg.norm(c[:5000, :, -1], axis=1, keepdims=True)
        forms = np.linalg.norm(np.swapaxes(c, 1, 2) @ m @ c, axis=(1, 2))
        assert np.all(forms > tol)


@pytest.mark.parametrize("w, expected", [((0.0, R2, R2), True), ((1.0, 0.0, 0.0), False),
                                         ((R2, R2, 0.0), True)])
def test_is_pseudo_eigenvector_examples(w, expected):
    assert is_pseudo_eigenvector(EX, np.array(w)) is expected


def test_is_pseudo_eigenvector_requires_unit():
    with pytest.raises(DomainError):
        is_pseudo_eigenvector(EX, np.array([1.0, 1.0, 0.0]))


def test_same_pseudo_null_space_examples():
    w1, w2 = np.array([0.0, R2, R2]), np.array([R2, R2, 0.0])
    assert w1 @ EX @ w2 == pytest.approx(-0.5)
    assert not same_pseudo_null_space(EX, w1, w2)
    assert same_pseudo_null_space(EX, w1, w1)
    assert same_pseudo_null_space(np.zeros((3, 3)), np.eye(3)[0], np.eye(3)[1])
    with pytest.raises(DomainError):
        same_pseudo_null_space(EX, np.eye(3)[0], w1)


@pytest.mark.parametrize("dp, dm, expected", [(3, 5, 60), (1, 1, 1), (2, 1, 2), (0, 4, 1),
                                              (2, 2, 2)])
def test_count_11_spaces(dp, dm, expected):
    assert count_11_spaces(dp, dm) == expected


def test_count_11_spaces_both_signs():
    assert count_11_spaces(3, 5, both_signs=True) == 480


def test_enumerate_example_spans():
    spaces = enumerate_11_spaces(EX)
    assert len(spaces) == 2 and not spaces.truncated
    spans = [s.columns for s in spaces]
    expected = [np.array([R2, R2, 0.0]), np.array([0.0, R2, R2])]
    for e in expected:
        assert any(np.allclose(np.outer(e, e), c @ c.T, atol=1e-12) for c in spans)


def test_enumerate_sixty():
    rng = np.random.default_rng(1)
    q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    m = sym(q @ np.diag([3.0, 2.0, 1.0, -1.0, -2.0, -3.0, -4.0, -5.0]) @ q.T)
    spaces = enumerate_11_spaces(m)
    assert spaces.total == 60 and len(spaces) == 60
    for s in spaces:
        c = s.columns
        assert c.shape == (8, 3)
        np.testing.assert_allclose(c.T @ c, np.eye(3), atol=1e-10)
        assert np.linalg.norm(c.T @ m @ c) <= 1e-8 * np.linalg.norm(m)
    for i in range(60):
        for j in range(i):
            assert max_angle(spaces[i].columns, spaces[j].columns) > 1e-6


def test_enumerate_truncation_is_deterministic():
    m = np.diag([3.0, 2.0, 1.0, -1.0, -2.0, -3.0, -4.0, -5.0])
    a = enumerate_11_spaces(m, cap=10, seed=4)
    b = enumerate_11_spaces(m, cap=10, seed=4)
    assert a.truncated and len(a) == 10 and a.total == 60
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.columns, y.columns)


def test_enumerate_both_signs_adds_reflected_spans():
    spaces = enumerate_11_spaces(EX, both_signs=True)
    assert len(spaces) == 4
    for s in spaces:
        v = s.columns.ravel()
        assert abs(v @ EX @ v) < 1e-14
    for i in range(4):
        for j in range(i):
            assert max_angle(spaces[i].columns, spaces[j].columns) > 1e-6


def test_enumerate_rejects_bad_cap():
    with pytest.raises(DomainError):
        enumerate_11_spaces(EX, cap=0)


@pytest.mark.parametrize("lam, d0, dpm, expected", [
    ((-2, -0.1, 0.5, 3), 0, (2, 2), (2, 2)),
    ((-2, 0.01, 0.5, 3), 0, (2, 2), (2, 1)),
    ((0.1, 0.5, 1, 3), 0, (3, 1), (3, 0)),
])
def test_truncated_sample_counts(lam, d0, dpm, expected):
    assert truncated_sample_counts(lam, d0, dpm) == expected


def test_truncated_sample_counts_rejects_excess():
    with pytest.raises(DomainError):
        truncated_sample_counts([1.0, 2.0], 1, (1, 1))


def test_sample_ranked_eigen_blocks():
    m = np.diag([0.02, -3.0, 2.0, -0.01])
    ranked = sample_ranked_eigen(m, 2, 1, 1)
    np.testing.assert_allclose(ranked.pos_vals, [2.0])
    np.testing.assert_allclose(ranked.neg_vals, [-3.0])
    np.testing.assert_allclose(np.sort(ranked.zero_vals), [-0.01, 0.02])


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10_000), st.floats(-100, 100).filter(lambda c: abs(c) > 1e-3))
def test_pseudo_nullity_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    m = random_symmetric(rng, int(rng.integers(1, 8)))
    assert pseudo_nullity(c * m) == pseudo_nullity(m)

import itertools
from math import comb

import numpy as np
import pytest

from cmk.errors import DimensionMismatch, InvalidOrder
from cmk.symfun import (
    gamma_k_membership,
    in_gamma_k,
    newton_maclaurin_constant,
    sigma_all,
    sigma_k_derivatives,
    sigma_k_eval,
    sigma_polarized,
    sigma_polarized_delta,
    sigma_two_eigs,
)

from conftest import random_sym


def brute_sigma(A, k):
    lam = np.linalg.eigvalsh(A)
    return sum(np.prod(c) for c in itertools.combinations(lam, k)) if k else 1.0


@pytest.mark.parametrize(
    "A, k, expected",
    [
        (np.eye(3), 2, 3.0),
        (np.diag([1.0, 2.0, 3.0]), 2, 11.0),
        (np.array([[2.0, 1.0], [1.0, 2.0]]), 2, 3.0),
        (np.eye(4), 0, 1.0),
    ],
)
def test_sigma_examples(A, k, expected):
    assert sigma_k_eval(A, k) == pytest.approx(expected, abs=1e-14)


def test_sigma_matches_eigenvalue_expansion(rng):
    for n in range(1, 6):
        A = random_sym(rng, n)
        for k in range(n + 1):
            assert sigma_k_eval(A, k) == pytest.approx(brute_sigma(A, k), rel=1e-10, abs=1e-12)


def test_sigma_stack_shape(rng):
    A = np.stack([random_sym(rng, 3) for _ in range(7)])
    assert sigma_all(A, 3).shape == (7, 4)
    np.testing.assert_allclose(sigma_k_eval(A, 2), [sigma_k_eval(a, 2) for a in A])


@pytest.mark.parametrize("k", [-1, 4, 2.5])
def test_invalid_order(k):
    with pytest.raises(InvalidOrder):
        sigma_k_eval(np.eye(3), k)


def test_nonsquare_rejected():
    with pytest.raises(DimensionMismatch):
        sigma_k_eval(np.ones((2, 3)), 1)


def test_gradient_examples(rng):
    g, _ = sigma_k_derivatives(np.diag([1.0, 2.0, 3.0]), 2)
    assert g[0, 0] == pytest.approx(5.0)
    A = random_sym(rng, 4)
    g, H = sigma_k_derivatives(A, 1)
    np.testing.assert_allclose(g, np.eye(4), atol=1e-15)
    np.testing.assert_allclose(H, 0.0, atol=1e-15)


def test_sigma2_hessian_entries(rng):
    _, H = sigma_k_derivatives(random_sym(rng, 3), 2)
    assert H[1, 1, 2, 2] == pytest.approx(1.0)
    assert H[1, 1, 1, 1] == pytest.approx(0.0, abs=1e-14)
    # off-diagonal pair: d^2/dA_12 dA_21 of (A11A22 - A12A21 + ...) is -1
    assert H[1, 2, 2, 1] == pytest.approx(-1.0)


@pytest.mark.parametrize("n, k", [(3, 2), (3, 3), (4, 3), (5, 4)])
def test_derivatives_match_finite_differences(rng, n, k):
    A = random_sym(rng, n)
    g, H = sigma_k_derivatives(A, k)
    h = 1e-5
    for i, j in itertools.product(range(n), repeat=2):
        E = np.zeros((n, n))
        E[i, j] = h
        fd = (sigma_k_eval(A + E, k) - sigma_k_eval(A - E, k)) / (2 * h)
        assert g[i, j] == pytest.approx(fd, abs=1e-8)
        gp, _ = sigma_k_derivatives(A + E, k, hessian=False)
        gm, _ = sigma_k_derivatives(A - E, k, hessian=False)
        np.testing.assert_allclose(H[i, j], (gp - gm) / (2 * h), atol=1e-8)


def test_hessian_index_symmetry(rng):
    _, H = sigma_k_derivatives(random_sym(rng, 4), 3)
    np.testing.assert_allclose(H, H.transpose(2, 3, 0, 1), atol=1e-12)


def test_polarization_examples(rng):
    A = random_sym(rng, 3)
    B = np.diag([1.0, 2.0, 3.0])
    assert sigma_polarized([A, A, A], 3) == pytest.approx(sigma_k_eval(A, 3), rel=1e-12)
    assert sigma_polarized([np.eye(3), B], 2) == pytest.approx(6.0)
    C = random_sym(rng, 3)
    assert sigma_polarized([A, C], 2) == pytest.approx(sigma_polarized([C, A], 2), rel=1e-12)


@pytest.mark.parametrize("n, k", [(2, 2), (3, 2), (3, 3)])
def test_polarization_against_delta_sum(rng, n, k):
    mats = [random_sym(rng, n) for _ in range(k)]
    assert sigma_polarized(mats, k) == pytest.approx(sigma_polarized_delta(mats, k), rel=1e-10, abs=1e-12)


def test_polarization_dimension_checks():
    with pytest.raises(DimensionMismatch):
        sigma_polarized([np.eye(2), np.eye(3)], 2)
    with pytest.raises(DimensionMismatch):
        sigma_polarized([np.eye(3)], 2)


@pytest.mark.parametrize(
    "A, k, inside",
    [(np.eye(3), 3, True), (np.diag([-1.0, 3.0, 3.0]), 2, True), (np.diag([-1.0, -1.0, 5.0]), 2, False)],
)
def test_cone_membership(A, k, inside):
    rep = gamma_k_membership(A, k)
    assert rep.in_cone is inside
    assert rep.in_cone == all(s > 0 for s in rep.sigmas)
    assert len(rep.sigmas) == k


def test_cone_boundary_is_excluded():
    assert not gamma_k_membership(np.diag([0.0, 1.0, 1.0]), 3).in_cone
    assert in_gamma_k(np.stack([np.eye(2), -np.eye(2)]), 1).tolist() == [True, False]


def test_newton_maclaurin_equality_at_identity():
    for n, k in [(3, 2), (3, 3), (5, 3)]:
        C = newton_maclaurin_constant(n, k)
        lhs = comb(n, k - 1)
        rhs = C * n ** (1 / (k - 1)) * comb(n, k) ** ((k - 2) / (k - 1))
        assert lhs == pytest.approx(rhs)
    with pytest.raises(InvalidOrder):
        newton_maclaurin_constant(3, 1)


def test_two_eigenvalue_shortcut():
    a, b = 1.7, 0.4
    A = np.diag([a, b, b])
    for k in range(4):
        assert sigma_two_eigs(a, b, 3, k) == pytest.approx(sigma_k_eval(A, k))

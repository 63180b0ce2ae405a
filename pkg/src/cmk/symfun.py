"""Elementary symmetric functions of symmetric matrices.

All routines accept a single ``(n, n)`` matrix or a stack ``(..., n, n)``
and work on the leading axes elementwise.  Values are obtained from the
power sums ``tr(A^j)`` through Newton's identities, so no eigen-decomposition
is involved; first and second derivatives follow from the same polynomial
recursion.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .errors import DimensionMismatch, InvalidOrder

__all__ = [
    "ConeReport",
    "sigma_k_eval",
    "sigma_all",
    "sigma_k_derivatives",
    "sigma_polarized",
    "sigma_polarized_delta",
    "gamma_k_membership",
    "in_gamma_k",
    "newton_maclaurin_constant",
    "sigma_two_eigs",
]


def _as_square(A):
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionMismatch(f"expected square matrix, got shape {A.shape}")
    return A


def _check_order(k, n, lo=0):
    if int(k) != k or not lo <= k <= n:
        raise InvalidOrder(f"order k={k} outside [{lo}, {n}]")


def _powers(A, q):
    """A^0, ..., A^(q-1) stacked on a new leading axis."""
    n = A.shape[-1]
    out = [np.broadcast_to(np.eye(n), A.shape).copy()]
    for _ in range(1, q):
        out.append(out[-1] @ A)
    return out


def sigma_all(A, kmax: int) -> np.ndarray:
    """Return ``sigma_0 .. sigma_kmax`` of ``A`` along a trailing axis."""
    A = _as_square(A)
    n = A.shape[-1]
    _check_order(kmax, n)
    lead = A.shape[:-2]
    e = np.zeros(lead + (kmax + 1,))
    e[..., 0] = 1.0
    if kmax == 0:
        return e
    p = np.zeros(lead + (kmax + 1,))
    P = A
    for j in range(1, kmax + 1):
        p[..., j] = np.trace(P, axis1=-2, axis2=-1)
        if j < kmax:
            P = P @ A
    for m in range(1, kmax + 1):
        acc = np.zeros(lead)
        for i in range(1, m + 1):
            acc = acc + (-1) ** (i - 1) * e[..., m - i] * p[..., i]
        e[..., m] = acc / m
    return e


def sigma_k_eval(A, k: int):
    """k-th elementary symmetric function of the eigenvalues of ``A``."""
    A = _as_square(A)
    _check_order(k, A.shape[-1])
    return sigma_all(A, k)[..., k]


def _newton_tensor_T(A, sig, m, pw):
    """Transpose of the Newton tensor ``T_{m-1}``, i.e. d sigma_m / dA."""
    g = np.zeros_like(A)
    for s in range(m):
        g = g + (-1) ** s * sig[..., m - 1 - s, None, None] * np.swapaxes(pw[s], -1, -2)
    return g


def sigma_k_derivatives(A, k: int, hessian: bool = True):
    """First and second partial derivatives of ``sigma_k`` in the entries of ``A``.

    Returns ``(grad, hess)`` with ``grad[..., i, j] = d sigma_k / dA_ij`` and
    ``hess[..., i, j, l, m] = d^2 sigma_k / dA_ij dA_lm``; entries are treated
    as independent variables.  ``hess`` is ``None`` when ``hessian=False``.
    """
    A = _as_square(A)
    n = A.shape[-1]
    _check_order(k, n, lo=1)
    sig = sigma_all(A, k)
    pw = _powers(A, k)
    grad = _newton_tensor_T(A, sig, k, pw)
    if not hessian:
        return grad, None
    H = np.zeros(A.shape[:-2] + (n, n, n, n))
    for q in range(k):
        c = (-1) ** q
        m = k - 1 - q
        if m >= 1:
            gm = _newton_tensor_T(A, sig, m, pw)
            H += c * np.einsum("...lm,...ji->...ijlm", gm, pw[q])
        for r in range(q):
            H += c * sig[..., m, None, None, None, None] * np.einsum(
                "...jl,...mi->...ijlm", pw[r], pw[q - 1 - r]
            )
    return grad, H


def sigma_polarized(mats, k: int):
    """Complete polarization ``sigma_k(A_1, ..., A_k)``.

    Evaluated by inclusion-exclusion over the ``2^k`` subset sums, which is
    exact for a homogeneous polynomial of degree ``k``.
    """
    mats = [_as_square(M) for M in mats]
    if len(mats) != k:
        raise DimensionMismatch(f"need exactly k={k} matrices, got {len(mats)}")
    if len({M.shape[-1] for M in mats}) != 1:
        raise DimensionMismatch("matrices have different dimensions")
    _check_order(k, mats[0].shape[-1], lo=1)
    total = 0.0
    for r in range(1, k + 1):
        for subset in itertools.combinations(range(k), r):
            S = sum(mats[i] for i in subset)
            total = total + (-1) ** (k - r) * sigma_k_eval(S, k)
    return total / factorial(k)


def _perm_sign(perm):
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def sigma_polarized_delta(mats, k: int) -> float:
    """Polarization via the generalized Kronecker delta sum (single matrices only).

    O(n^k k!) work; intended as an independent cross-check for small n.
    """
    mats = [_as_square(M) for M in mats]
    if len(mats) != k or any(M.ndim != 2 for M in mats):
        raise DimensionMismatch("need k plain (n, n) matrices")
    n = mats[0].shape[0]
    if any(M.shape != (n, n) for M in mats):
        raise DimensionMismatch("matrices have different dimensions")
    perms = [(p, _perm_sign(p)) for p in itertools.permutations(range(k))]
    total = 0.0
    for idx in itertools.permutations(range(n), k):
        for p, sgn in perms:
            prod = 1.0
            for r in range(k):
                prod *= mats[r][idx[r], idx[p[r]]]
            total += sgn * prod
    return total / factorial(k)


@dataclass(frozen=True)
class ConeReport:
    k: int
    sigmas: list
    in_cone: bool


def gamma_k_membership(A, k: int) -> ConeReport:
    """Membership of a single matrix in Garding's cone (strict inequalities)."""
    A = _as_square(A)
    if A.ndim != 2:
        raise DimensionMismatch("gamma_k_membership takes one matrix; use in_gamma_k for stacks")
    _check_order(k, A.shape[-1], lo=1)
    s = sigma_all(A, k)[1:]
    return ConeReport(k=k, sigmas=[float(v) for v in s], in_cone=bool(np.all(s > 0)))


def in_gamma_k(A, k: int) -> np.ndarray:
    """Boolean mask of ``sigma_i(A) > 0`` for all ``i <= k`` over a stack."""
    A = _as_square(A)
    _check_order(k, A.shape[-1], lo=1)
    s = sigma_all(A, k)[..., 1:]
    return np.all(s > 0, axis=-1)


def newton_maclaurin_constant(n: int, k: int) -> float:
    """Constant in ``sigma_{k-1} >= C sigma_1^{1/(k-1)} sigma_k^{(k-2)/(k-1)}`` on Gamma_k.

    Uses the normalized means ``E_j = sigma_j / C(n, j)``, whose logarithms are
    concave in ``j``; interpolating between ``j = 1`` and ``j = k`` gives
    ``E_{k-1} >= E_1^{1/(k-1)} E_k^{(k-2)/(k-1)}``.
    """
    if not 2 <= k <= n:
        raise InvalidOrder(f"Newton-Maclaurin form needs 2 <= k <= n, got k={k}, n={n}")
    return comb(n, k - 1) / (n ** (1.0 / (k - 1)) * comb(n, k) ** ((k - 2) / (k - 1)))


def sigma_two_eigs(a, b, n: int, k: int):
    """sigma_k of a spectrum with ``a`` once and ``b`` repeated ``n - 1`` times."""
    if k == 0:
        return np.ones_like(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    return comb(n - 1, k - 1) * a * b ** (k - 1) + comb(n - 1, k) * b**k

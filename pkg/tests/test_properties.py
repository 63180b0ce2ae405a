"""Property-based checks of the invariants each module promises."""

import os
import tempfile
from math import comb

import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cmk import diagnostics as dg
from cmk import geometry as ge
from cmk import spheregrid as sg
from cmk.problem import ProblemSpec, homotopy_f, make_spec, residual
from cmk.solver import manufacture_f, random_admissible_starts
from cmk.symfun import (
    in_gamma_k,
    newton_maclaurin_constant,
    sigma_all,
    sigma_k_derivatives,
    sigma_k_eval,
    sigma_polarized,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def sym_matrices(draw, n=None):
    n = draw(st.integers(1, 5)) if n is None else n
    A = draw(arrays(float, (n, n), elements=finite))
    return 0.5 * (A + A.T)


def rotation(seed, n):
    q, r = np.linalg.qr(np.random.default_rng(seed).normal(size=(n, n)))
    return q * np.sign(np.diag(r))


@given(sym_matrices(), st.floats(0.1, 5.0))
def test_homogeneity(A, t):
    n = A.shape[0]
    for k in range(n + 1):
        lhs = sigma_k_eval(t * A, k)
        rhs = t**k * sigma_k_eval(A, k)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs), t**k * np.abs(A).max() ** k * comb(n, k) * 10)


@given(sym_matrices())
def test_euler_identity(A):
    n = A.shape[0]
    for k in range(1, n + 1):
        g, _ = sigma_k_derivatives(A, k, hessian=False)
        scale = max(1.0, comb(n, k) * (np.abs(A).max() * n) ** k)
        assert abs(np.sum(g * A) - k * sigma_k_eval(A, k)) <= 1e-12 * scale


@given(sym_matrices(n=4), st.integers(0, 2**31 - 1))
def test_orthogonal_invariance(A, seed):
    Q = rotation(seed, 4)
    s1 = sigma_all(A, 4)
    s2 = sigma_all(Q.T @ A @ Q, 4)
    assert np.allclose(s1, s2, rtol=1e-10, atol=1e-10 * max(1.0, np.abs(A).max() ** 4 * 16))


@given(arrays(float, 4, elements=st.floats(-0.5, 3.0)), st.integers(2, 4))
def test_newton_maclaurin(lam, k):
    A = np.diag(lam)
    assume(in_gamma_k(A, k))
    s = sigma_all(A, k)
    assume(s[k] > 1e-8)
    C = newton_maclaurin_constant(4, k)
    assert s[k - 1] >= C * s[1] ** (1 / (k - 1)) * s[k] ** ((k - 2) / (k - 1)) * (1 - 1e-9)


@given(sym_matrices(n=3), sym_matrices(n=3), sym_matrices(n=3), st.floats(-2, 2))
def test_polarization_multilinear_symmetric(A, B, C, t):
    lhs = sigma_polarized([A + t * B, C], 2)
    rhs = sigma_polarized([A, C], 2) + t * sigma_polarized([B, C], 2)
    assert abs(lhs - rhs) <= 1e-9 * (1 + abs(lhs))
    assert abs(sigma_polarized([A, B, C], 3) - sigma_polarized([C, A, B], 3)) <= 1e-9 * (
        1 + abs(sigma_polarized([A, B, C], 3))
    )


GRIDS = {
    "axi2": sg.build_grid(2, "axisym", 32),
    "axi3": sg.build_grid(3, "axisym", 32),
    "s2": sg.build_grid(2, "full2d", (16, 32)),
}


@given(st.sampled_from(sorted(GRIDS)), st.integers(0, 2**31 - 1))
def test_symmetrize_even_idempotent(name, seed):
    g = GRIDS[name]
    f = g.field(np.random.default_rng(seed).normal(size=g.size))
    e = sg.symmetrize_even(f)
    assert np.array_equal(e.values, e.values[g.antipodal])
    assert np.array_equal(sg.symmetrize_even(e).values, e.values)


@given(st.sampled_from(sorted(GRIDS)), st.floats(0.5, 3.0), st.floats(-0.4, 0.4), st.floats(0, 0.5))
def test_affine_support_function_w(name, a, b, eps):
    g = GRIDS[name]
    lam = sg.covariant_w(g.field(a + b * g.xlast), eps).eigenvalues
    # exact up to the O(h^2) truncation of the tangential stencil
    assert np.abs(lam - (a + eps)).max() <= 0.02 * abs(b) + 1e-12


@given(st.sampled_from(sorted(GRIDS)), st.floats(0.3, 3.0))
def test_af_equality_and_minkowski_for_constants(name, r):
    g = GRIDS[name]
    spec = make_spec(g, 1, 0.5)
    rep = dg.integral_identities(g.field(np.full(g.size, r)), spec)
    assert abs(rep["af_ratio"] - 1) <= 1e-10
    assert rep["minkowski_rel_err"] <= 1e-12


@given(st.floats(0.5, 2.0), st.floats(-0.2, 0.2), st.sampled_from([1, 2, 3]))
def test_quermass_independent_of_p(c, b, p):
    g = GRIDS["axi3"]
    u = g.field(c * (1 + b * g.xlast**2))
    ref = dg.p_area_and_quermass(u, u, 1, 2)[1]
    assert abs(dg.p_area_and_quermass(u, u, p, 2)[1] - ref) <= 1e-12 * abs(ref)


@given(st.floats(0.5, 2.0), st.floats(-0.15, 0.15), st.floats(0.1, 1.9))
def test_manufactured_pair_and_scaling(c, b, p0):
    g = GRIDS["axi3"]
    u = g.field(c * (1 + b * g.xlast**2))
    spec = make_spec(g, 2, p0)
    spec = spec.with_(f=manufacture_f(u, spec))
    assert np.abs(residual(u, spec).values).max() <= 1e-11 * max(1.0, spec.f.values.max())
    lam = 2.0
    scaled = spec.with_(f=spec.f.with_values(lam ** (2 - p0) * spec.f.values))
    R = residual(u.with_values(lam * u.values), scaled).values
    assert np.abs(R).max() <= 1e-10 * max(1.0, scaled.f.values.max())


@given(st.floats(0.1, 0.9), st.floats(0.2, 0.95))
def test_homotopy_monotone_in_t(t, p0):
    g = GRIDS["axi2"]
    f = g.field(0.5 + 0.4 * g.xlast**2)  # below C(2,1) = 2 everywhere
    spec = ProblemSpec(2, 1, p0, f)
    lo = homotopy_f(t, f, spec).values
    hi = homotopy_f(min(1.0, t + 0.05), f, spec).values
    assert np.all(hi <= lo + 1e-12)
    assert np.all(lo > 0)


@given(arrays(float, (12, 3), elements=st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False, width=64)))
def test_obj_round_trip(V):
    F = np.array([[0, 1, 2], [3, 4, 5], [9, 10, 11]])
    fd, path = tempfile.mkstemp(suffix=".obj")
    os.close(fd)
    try:
        ge.write_obj(path, V, F)
        V2, F2 = ge.read_obj(path)
    finally:
        os.unlink(path)
    assert np.array_equal(V, V2) and np.array_equal(F, F2)


@given(st.integers(0, 10_000))
def test_random_starts_in_cone(seed):
    g = GRIDS["s2"]
    (u,) = random_admissible_starts(g, 2, 1, seed=seed)
    assert u.values.min() > 0
    assert np.all(in_gamma_k(sg.assemble_w(g, u.values), 2))

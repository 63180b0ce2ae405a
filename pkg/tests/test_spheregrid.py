import math

import numpy as np
import pytest

from cmk import spheregrid as sg
from cmk.errors import InvalidResolution, UnsupportedGrid


@pytest.mark.parametrize(
    "n, kind, res, area",
    [(3, "axisym", 256, 2 * math.pi**2), (2, "full2d", (64, 128), 4 * math.pi), (2, "axisym", 64, 4 * math.pi)],
)
def test_weights_sum_to_area(n, kind, res, area):
    g = sg.build_grid(n, kind, res)
    assert np.all(g.weights > 0)
    assert g.weights.sum() == pytest.approx(area, rel=1e-4)


def test_grid_errors():
    with pytest.raises(InvalidResolution):
        sg.build_grid(2, "full2d", (33, 64))
    with pytest.raises(InvalidResolution):
        sg.build_grid(3, "axisym", 6)
    with pytest.raises(UnsupportedGrid):
        sg.build_grid(3, "full2d", 32)
    with pytest.raises(UnsupportedGrid):
        sg.build_grid(4, "axisym", 32)


@pytest.mark.parametrize("kind, res", [("axisym", 32), ("full2d", (16, 32))])
def test_cell_centred_and_antipodal_involution(kind, res):
    g = sg.build_grid(2, kind, res)
    assert g.theta.min() > 0 and g.theta.max() < math.pi
    np.testing.assert_array_equal(g.antipodal[g.antipodal], np.arange(g.size))
    X = g.ambient()
    if kind == "full2d":
        np.testing.assert_allclose(X[g.antipodal], -X, atol=1e-14)
    else:
        # axisymmetric nodes stand for whole parallels: only x_{n+1} flips
        np.testing.assert_allclose(X[g.antipodal, -1], -X[:, -1], atol=1e-14)


def test_constant_gives_scaled_identity(axi3, s2):
    for g in (axi3, s2):
        W = sg.covariant_w(g.field(np.full(g.size, 2.5)), 0.0).W
        # exact up to round-off in the stencil sums
        np.testing.assert_allclose(W, np.broadcast_to(2.5 * np.eye(g.n), W.shape), rtol=0, atol=1e-12)


def test_affine_support_function(axi3, s2):
    for g in (axi3, s2):
        wf = sg.covariant_w(g.field(1 - g.xlast), 0.0)
        np.testing.assert_allclose(wf.eigenvalues, 1.0, atol=1e-3)
    wf = sg.covariant_w(axi3.field(1 - axi3.xlast), 0.25)
    np.testing.assert_allclose(wf.eigenvalues, 1.25, atol=1e-3)


def _w_error(n, kind, res, u_fn, exact_fn):
    g = sg.build_grid(n, kind, res)
    W = sg.assemble_w(g, u_fn(g), 0.0)
    return np.abs(W - exact_fn(g)).max()


def _axisym_exact(g):
    # u = exp(cos theta): u' = -sin e^c, u'' = (sin^2 - cos) e^c
    t = g.theta
    e = np.exp(np.cos(t))
    W = np.zeros((g.size, g.n, g.n))
    W[:, 0, 0] = (np.sin(t) ** 2 - np.cos(t)) * e + e
    for i in range(1, g.n):
        W[:, i, i] = -np.cos(t) * e + e
    return W


def _full2d_exact(g):
    # u = x z^2 + y, worked out in the (theta, phi) frame
    t, p = g.theta, g.phi
    st, ct, sp_, cp = np.sin(t), np.cos(t), np.sin(p), np.cos(p)
    u = st * cp * ct**2 + st * sp_
    ut = cp * (ct**3 - 2 * st**2 * ct) + ct * sp_
    utt = cp * (-3 * ct**2 * st - 4 * st * ct**2 + 2 * st**3) - st * sp_
    up = -st * sp_ * ct**2 + st * cp
    upp = -st * cp * ct**2 - st * sp_
    utp = -sp_ * (ct**3 - 2 * st**2 * ct) + ct * cp
    W = np.zeros((g.size, 2, 2))
    W[:, 0, 0] = utt + u
    W[:, 0, 1] = W[:, 1, 0] = (utp - ct / st * up) / st
    W[:, 1, 1] = upp / st**2 + ct / st * ut + u
    return W


def test_axisym_w_second_order():
    e1 = _w_error(3, "axisym", 64, lambda g: np.exp(g.xlast), _axisym_exact)
    e2 = _w_error(3, "axisym", 128, lambda g: np.exp(g.xlast), _axisym_exact)
    assert e1 / e2 >= 3.5


def test_full2d_w_second_order():
    def u_fn(g):
        X = g.ambient()
        return X[:, 0] * X[:, 2] ** 2 + X[:, 1]

    e1 = _w_error(2, "full2d", (32, 64), u_fn, _full2d_exact)
    e2 = _w_error(2, "full2d", (64, 128), u_fn, _full2d_exact)
    assert e1 / e2 >= 3.5


def test_prop53_radii_match_factored_form():
    # for u = (1-y)^a, W = (1-y)^(a-1) diag((1+(a-1)y)(1 + a (a-1)(1+y)/(1+(a-1)y)) , 1 + (a-1) y)
    a = 10 / 9
    errs = []
    for J in (64, 128):
        g = sg.build_grid(3, "axisym", J)
        y = g.xlast
        W = sg.assemble_w(g, (1 - y) ** a, 0.0)
        tang = (1 - y) ** (a - 1) * (1 + (a - 1) * y)
        rad = (1 - y) ** (a - 1) * (1 + (a - 1) * y + a * (a - 1) * (1 + y))
        mask = g.theta > 0.5  # the closed form is singular at the pole
        errs.append(max(np.abs(W[mask, 0, 0] - rad[mask]).max(), np.abs(W[mask, 1, 1] - tang[mask]).max()))
    assert errs[0] / errs[1] >= 3.5


def test_integrate_examples(s2):
    assert sg.integrate(s2.field(np.ones(s2.size))) == pytest.approx(4 * math.pi, rel=1e-4)
    assert abs(sg.integrate(s2.field(np.cos(s2.theta)))) < 1e-10
    fine = sg.build_grid(2, "full2d", (128, 256))
    assert sg.integrate(fine.field(np.cos(fine.theta) ** 2)) == pytest.approx(4 * math.pi / 3, rel=1e-4)


def test_integrate_second_order():
    errs = []
    for J in (32, 64):
        g = sg.build_grid(2, "full2d", J)
        errs.append(abs(sg.integrate(g.field(np.cos(g.theta) ** 2)) - 4 * math.pi / 3))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_symmetrize_even(s2, axi3):
    for g in (s2, axi3):
        odd = g.field(np.cos(g.theta))
        np.testing.assert_allclose(sg.symmetrize_even(odd).values, 0.0, atol=1e-15)
        even = g.field(1 + np.cos(g.theta) ** 2)
        np.testing.assert_allclose(sg.symmetrize_even(even).values, even.values, rtol=1e-15)
        r = g.field(np.random.default_rng(0).random(g.size))
        once = sg.symmetrize_even(r)
        np.testing.assert_array_equal(sg.symmetrize_even(once).values, once.values)
        np.testing.assert_array_equal(once.values, once.values[g.antipodal])


def test_even_u_spectrum_commutes_with_antipode(s2):
    X = s2.ambient()
    u = s2.field(1 + 0.1 * X[:, 0] * X[:, 1] + 0.2 * X[:, 2] ** 2)
    lam = sg.covariant_w(u).eigenvalues
    np.testing.assert_allclose(lam, lam[s2.antipodal], atol=1e-12)


@pytest.mark.parametrize("kind, res, n", [("axisym", 16, 3), ("full2d", (8, 16), 2)])
def test_csv_round_trip(tmp_path, kind, res, n):
    g = sg.build_grid(n, kind, res)
    f = g.field(np.sin(g.theta) + 0.1 / 3)
    path = tmp_path / "f.csv"
    sg.write_field_csv(f, path)
    back = sg.read_field_csv(path, n=n)
    np.testing.assert_array_equal(back.values, f.values)
    assert back.grid.resolution == g.resolution
    header = path.read_text().splitlines()[0]
    assert header == ("theta,phi,value" if kind == "full2d" else "theta,value")


def test_scalar_field_validation(axi3):
    with pytest.raises(ValueError):
        axi3.field(np.ones(3))
    with pytest.raises(ValueError):
        axi3.field(np.full(axi3.size, np.nan))

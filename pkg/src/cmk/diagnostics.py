"""Post-hoc monitors: a priori bounds, integral identities and the concavity inequality.

Every function takes fields that are already on a grid and returns plain
numbers (wrapped in :class:`MonitorReport`) so results can be dumped to JSON
next to a solve report.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from . import spheregrid as sg
from .errors import (
    MinkowskiNotApplicable,
    NonpositiveSupport,
    NotApplicable,
    OutOfRange,
    SolverError,
)
from .problem import ProblemSpec
from .symfun import in_gamma_k, sigma_all, sigma_k_derivatives, sigma_k_eval, sigma_polarized

__all__ = [
    "MonitorReport",
    "apriori_monitors",
    "compute_alpha",
    "alpha_constraints",
    "convexity_rank_report",
    "af_constant",
    "integral_identities",
    "polarized_volume",
    "p_area_and_quermass",
    "gll_check",
    "ode_repr_check",
    "sigma1_over_u_alpha",
    "uniqueness_experiment",
    "coarse_in_fine",
    "manufactured_convergence",
]


@dataclass
class MonitorReport:
    """Named scalar results with optional pass flags."""

    values: dict = field(default_factory=dict)
    passes: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def merge(self, other: "MonitorReport") -> "MonitorReport":
        return MonitorReport({**self.values, **other.values}, {**self.passes, **other.passes})

    @property
    def all_pass(self) -> bool:
        return all(self.passes.values())

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, np.bool_):
                return bool(v)
            if isinstance(v, float) and not np.isfinite(v):
                return None if np.isnan(v) else ("inf" if v > 0 else "-inf")
            return v

        return {
            "values": {k: clean(v) for k, v in self.values.items()},
            "passes": {k: bool(v) for k, v in self.passes.items()},
        }


def _check_positive(u: sg.ScalarField):
    if np.any(u.values <= 0):
        raise NonpositiveSupport("support function must be positive")


def _geodesic_from(grid: sg.SphereGrid, idx: int) -> np.ndarray:
    """Distance from node ``idx`` to every node (to the nearest point of a parallel
    on axisymmetric grids)."""
    if grid.kind == sg.AXISYM:
        return np.abs(grid.theta - grid.theta[idx])
    X = grid.ambient()
    return np.arccos(np.clip(X @ X[idx], -1.0, 1.0))


# -- a priori monitors ------------------------------------------------------------


def apriori_monitors(u: sg.ScalarField, spec: ProblemSpec, delta: float = 1e-10) -> MonitorReport:
    """Gradient-oscillation quantity, max lower bound and the Harnack-type ball.

    For ``k >= 2`` and ``p0 >= (k-1)/2`` the sup of ``sigma_1 / u^alpha`` is
    added, with ``alpha`` from :func:`compute_alpha`.

    With ``eps > 0`` the max lower bound uses ``C(n,k) (M + eps)^k >= M^p0 min f``,
    which reduces to ``M >= (min f / C(n,k))^{1/(k-p0)}`` at ``eps = 0``.
    """
    _check_positive(u)
    n, k, p0, eps = spec.n, spec.k, spec.p0, spec.eps
    v = u.values
    N = n * (1 + 2 * delta)
    gamma = 2.0 / (N * N + 2.0)
    m_u, M_u = float(v.min()), float(v.max())
    grad2 = np.sum(sg.gradient(u.grid, v) ** 2, axis=1)
    gap = v - m_u
    phi = np.zeros_like(v)
    live = gap >= 1e-12
    phi[live] = grad2[live] / gap[live] ** gamma
    phi_sup = float(phi.max())
    a_eff = phi_sup / M_u ** (2 - gamma)
    fmin = float(spec.f_t().min())
    binom = comb(n, k)
    maxlb_rhs = (fmin / binom) ** (1.0 / (k - p0))
    if eps == 0:
        maxlb_ok = M_u >= maxlb_rhs
    else:
        maxlb_ok = binom * (M_u + eps) ** k >= M_u**p0 * fmin
    imax = int(np.argmax(v))
    # no point is farther than pi, so A_eff = 0 means the whole sphere
    radius = np.pi if a_eff == 0 else min(np.pi, 1.0 / (2.0 * np.sqrt(a_eff)))
    ball = _geodesic_from(u.grid, imax) <= radius
    harnack_min = float(v[ball].min())
    vals = {
        "max_u": M_u,
        "min_u": m_u,
        "gamma": gamma,
        "N": N,
        "Phi_sup": phi_sup,
        "A_eff": a_eff,
        "maxlb_rhs": maxlb_rhs,
        "harnack_radius": float(radius),
        "harnack_ball_min_ratio": harnack_min / M_u,
    }
    passes = {
        "Phi_finite": bool(np.isfinite(phi_sup)),
        "maxlb": bool(maxlb_ok),
        "harnack_ball": bool(harnack_min >= 0.5 * M_u),
    }
    if k >= 2 and (k - 1) / 2 <= p0:
        alpha = compute_alpha(k, p0)
        vals["alpha_used"] = alpha
        vals["sigma1_over_u_alpha_sup"] = sigma1_over_u_alpha(u, eps, alpha)
    return MonitorReport(vals, passes)


# -- the second-derivative exponent -----------------------------------------------


def alpha_constraints(k: int, p0: float, a: float) -> tuple:
    """Values of the three constraints on the exponent; all must be >= 0."""
    c1 = p0 - k * a
    c2 = (2 / (k - 1)) * p0**2 - p0 + ((k - 5) / (k - 1)) * a * p0 - k * a * (1 + a) + (2 * k / (k - 1)) * a**2
    c3 = (p0 - 0.5 - (1 / (k - 1) + 0.5) * a) - p0 * (k - 2) / (k - 1)
    return c1, c2, c3


def compute_alpha(k: int, p0: float, tol: float = 1e-6, samples: int = 2001) -> float:
    """Largest ``alpha >= 0`` satisfying :func:`alpha_constraints`.

    ``alpha`` lives in ``[0, p0/k]`` because of the first constraint; the
    interval is scanned and the last feasible sample is refined by bisection.
    """
    if k == 1:
        raise NotApplicable("k = 1 is semilinear; no exponent is needed")
    if k < 1:
        raise OutOfRange(f"k={k}")
    if not (k - 1) / 2 <= p0 < k:
        raise OutOfRange(f"p0={p0} outside [(k-1)/2, k) = [{(k - 1) / 2}, {k})")

    def ok(a):
        return min(alpha_constraints(k, p0, a)) >= -1e-14

    top = p0 / k
    grid = np.linspace(0.0, top, samples)
    feas = np.array([ok(a) for a in grid])
    if not feas[0]:
        return 0.0
    last = int(np.nonzero(feas)[0][-1])
    if last == samples - 1:
        return float(top)
    lo, hi = grid[last], grid[last + 1]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return float(lo)


def sigma1_over_u_alpha(u: sg.ScalarField, eps: float, alpha: float) -> float:
    """``sup sigma_1(W_u^eps) / u^alpha`` over the grid."""
    _check_positive(u)
    W = sg.assemble_w(u.grid, u.values, eps)
    return float(np.max(np.trace(W, axis1=1, axis2=2) / u.values**alpha))


# -- convexity ----------------------------------------------------------------------


def convexity_rank_report(u: sg.ScalarField, eps: float = 0.0, k: int = 1, tol: float = 0.0):
    """Smallest eigenvalue of ``W_u^eps`` per node and a classification.

    ``status`` is ``convex`` (all eigenvalues above ``tol``), ``admissible-only``
    (in Gamma_k but not convex) or ``neither``.
    """
    wf = sg.covariant_w(u, eps)
    lam = wf.eigen_min
    convex = bool(np.all(lam > tol))
    admissible = bool(np.all(in_gamma_k(wf.W, k)))
    status = "convex" if convex else ("admissible-only" if admissible else "neither")
    flags = {
        "convex": convex,
        "admissible": admissible,
        "status": status,
        "min_eigenvalue": float(lam.min()),
        "argmin_node": int(np.argmin(lam)),
    }
    return u.with_values(lam), flags


# -- integral identities ------------------------------------------------------------


def af_constant(n: int, k: int) -> float:
    """Constant that makes the integrated inequality an equality on round spheres."""
    area = sg.sphere_area(n)
    return (comb(n, k + 1) * area) ** (1 / (k + 1)) / (comb(n, k) * area) ** (1 / k)


def polarized_volume(v: sg.ScalarField, us: list) -> float:
    """``V_{k+1}(v, u^1, ..., u^k) = int v sigma_k(W_{u^1}, ..., W_{u^k}) / C(n, k)``."""
    grid = v.grid
    k = len(us)
    mats = [sg.assemble_w(grid, w.values, 0.0) for w in us]
    return float(np.dot(grid.weights, v.values * sigma_polarized(mats, k))) / comb(grid.n, k)


def integral_identities(u: sg.ScalarField, spec: ProblemSpec, v: sg.ScalarField | None = None) -> MonitorReport:
    """Minkowski formula, the integrated AF inequality and its polarized form.

    The polarized check runs on axisymmetric grids only; it uses ``v`` (default ``1 + 0.3 x_{n+1} + 0.2 x_{n+1}^2``)
    against ``u^1 = ... = u^k = u`` and needs ``W_u`` in Gamma_k.
    """
    n, k = spec.n, spec.k
    if k >= n:
        raise MinkowskiNotApplicable(f"Minkowski formula needs k <= n - 1, got k={k}, n={n}")
    grid = u.grid
    W = sg.assemble_w(grid, u.values, 0.0)
    s = sigma_all(W, k + 1)
    w = grid.weights
    lhs = float(np.dot(w, u.values * s[:, k]))
    int_k = float(np.dot(w, s[:, k]))
    int_k1 = float(np.dot(w, s[:, k + 1]))
    rhs = (k + 1) / (n - k) * int_k1
    mink = abs(lhs - rhs) / abs(lhs)
    vals = {"minkowski_lhs": lhs, "minkowski_rhs": rhs, "minkowski_rel_err": mink}
    passes = {}
    in_k1 = bool(np.all(in_gamma_k(W, k + 1)))
    vals["in_gamma_k_plus_1"] = in_k1
    if int_k > 0 and int_k1 > 0:
        ratio = int_k1 ** (1 / (k + 1)) / (af_constant(n, k) * int_k ** (1 / k))
        vals["af_ratio"] = ratio
        if in_k1:
            passes["af_ratio"] = bool(ratio <= 1 + 1e-8)
    if grid.kind == sg.AXISYM and np.all(in_gamma_k(W, k)):
        if v is None:
            y = grid.xlast
            v = grid.field(1 + 0.3 * y + 0.2 * y * y)
        mixed = polarized_volume(v, [u] * k)
        vv = polarized_volume(v, [v] + [u] * (k - 1))
        uu = polarized_volume(u, [u] * k)
        slack = mixed**2 - vv * uu
        vals["af_polarized_slack"] = slack
        vals["af_polarized_rel_slack"] = slack / max(mixed**2, 1e-300)
        passes["af_polarized"] = bool(slack >= -1e-8 * mixed**2)
    return MonitorReport(vals, passes)


def p_area_and_quermass(uK: sg.ScalarField, uL: sg.ScalarField, p: float, k: int):
    """Density ``uK^{1-p} sigma_{n-k}(W_uK)`` and ``W_{p,k}(K, L)``."""
    _check_positive(uK)
    n = uK.grid.n
    if not 1 <= k <= n:
        raise OutOfRange(f"need 1 <= k <= n, got k={k}")
    W = sg.assemble_w(uK.grid, uK.values, 0.0)
    dens = uK.values ** (1 - p) * sigma_all(W, n - k)[:, n - k]
    wpk = float(np.dot(uK.grid.weights, uL.values**p * dens)) / (n + 1)
    return uK.with_values(dens), wpk


# -- concavity inequality ---------------------------------------------------------


def _frame_derivatives_of_w(grid: sg.SphereGrid, W: np.ndarray) -> np.ndarray:
    """Covariant derivatives ``(nabla_s W)_ij`` as an array ``(N, n_dirs, n, n)``.

    Entries of the assembled ``W`` are differentiated with the grid's central
    differences; connection terms come from ``nabla_{e_t} e_theta = cot e_t`` and
    ``nabla_{e_t} e_t = -cot e_theta``.
    """
    n = grid.n
    N = grid.size
    cot = 1.0 / np.tan(grid.theta)
    out = np.zeros((N, n, n, n))
    Dt = grid.grad_ops[0]
    for i in range(n):
        for j in range(n):
            out[:, 0, i, j] = Dt @ W[:, i, j]
    if grid.kind == sg.AXISYM:
        # tangential directions: only the (theta, t) entries survive
        for t in range(1, n):
            c = cot * (W[:, 0, 0] - W[:, t, t])
            out[:, t, 0, t] = c
            out[:, t, t, 0] = c
        return out
    Dp = grid.grad_ops[1]
    dW = {(i, j): Dp @ W[:, i, j] for i in range(2) for j in range(i, 2)}
    tt = dW[0, 0] - 2 * cot * W[:, 0, 1]
    tp = dW[0, 1] + cot * (W[:, 0, 0] - W[:, 1, 1])
    pp = dW[1, 1] + 2 * cot * W[:, 0, 1]
    out[:, 1] = np.stack([np.stack([tt, tp], -1), np.stack([tp, pp], -1)], -2)
    return out


def gll_check(u: sg.ScalarField, spec: ProblemSpec, tol_factor: float = 1e-3) -> MonitorReport:
    """Slack of the concavity inequality for ``sigma_k`` along every frame direction.

    ``nabla sigma_k`` and ``nabla sigma_1`` are formed by the chain rule from the
    same ``nabla_s W``.  The local scale is ``sigma_k (|nabla_s W| / sigma_1)^2``,
    which has the units of both sides.
    """
    k = spec.k
    if k < 2:
        raise NotApplicable("the concavity inequality needs k >= 2")
    grid = u.grid
    W = sg.assemble_w(grid, u.values, spec.eps)
    if not np.all(in_gamma_k(W, k)):
        raise NotApplicable("W is outside Gamma_k at some node")
    F, H = sigma_k_derivatives(W, k)
    sk = sigma_k_eval(W, k)
    s1 = np.trace(W, axis1=1, axis2=2)
    dW = _frame_derivatives_of_w(grid, W)
    worst = np.inf
    worst_norm = np.inf
    ok = True
    for s in range(grid.n):
        X = dW[:, s]
        lhs = -np.einsum("nijlm,nij,nlm->n", H, X, X)
        a = np.einsum("nij,nij->n", F, X) / sk
        b = np.trace(X, axis1=1, axis2=2) / s1
        rhs = sk * (a - b) * ((1 / (k - 1) - 1) * a - (1 / (k - 1) + 1) * b)
        slack = lhs - rhs
        scale = sk * (np.sqrt(np.sum(X * X, axis=(1, 2))) / s1) ** 2 + np.finfo(float).tiny
        worst = min(worst, float(slack.min()))
        worst_norm = min(worst_norm, float((slack / scale).min()))
        ok = ok and bool(np.all(slack >= -tol_factor * scale))
    return MonitorReport(
        {"gll_min_slack": worst, "gll_min_slack_scaled": worst_norm},
        {"gll": ok},
    )


# -- meridian ODE representation --------------------------------------------------


def _even_spline(theta, values):
    # reflect evenly across both poles
    th = np.concatenate([-theta[::-1], theta, 2 * np.pi - theta[::-1]])
    return CubicSpline(th, np.concatenate([values[::-1], values, values[::-1]]))


def _extremum(spl, theta, idx, sign):
    """Refine a discrete extremum of ``sign * spl`` at node ``idx`` using spline roots."""
    lo = theta[max(idx - 1, 0)] if idx > 0 else -theta[0]
    hi = theta[min(idx + 1, theta.size - 1)] if idx < theta.size - 1 else 2 * np.pi - theta[-1]
    d = spl.derivative()
    roots = [r for r in d.roots() if lo <= r <= hi and np.isreal(r)]
    cand = [float(np.clip(r, 0.0, np.pi)) for r in roots] + [float(theta[idx])]
    vals = [sign * spl(c) for c in cand]
    return cand[int(np.argmax(vals))]


def ode_repr_check(u: sg.ScalarField, spec: ProblemSpec | None = None, atol: float = 1e-12) -> MonitorReport:
    """Meridian representation between the maximum and minimum of an even
    axisymmetric ``u``.

    ``g = u'' + u`` is the discrete radial entry of ``W`` (``eps = 0``), splined
    with even reflection across the poles.  Reports the error of the
    reconstructed ``u(d)`` and of ``G(d) = (u(d) + M) sin d``.
    """
    grid = u.grid
    if grid.kind != sg.AXISYM:
        raise NotApplicable("ode_repr_check needs an axisymmetric field")
    v = u.values
    if np.max(np.abs(v - v[grid.antipodal])) > 1e-9 * max(1.0, np.abs(v).max()):
        raise NotApplicable("u is not even")
    if np.ptp(v) <= atol * max(1.0, np.abs(v).max()):
        return MonitorReport(
            {"ode_repr_err": 0.0, "g_identity_err": 0.0, "two_d": 0.0, "degenerate": True},
            {"ode_repr": True},
        )
    th = grid.theta
    g_nodes = sg.assemble_w(grid, v, 0.0)[:, 0, 0]
    us = _even_spline(th, v)
    gs = _even_spline(th, g_nodes)
    a = _extremum(us, th, int(np.argmax(v)), 1.0)
    b = _extremum(us, th, int(np.argmin(v)), -1.0)
    # the reflected copy of the minimum may be closer
    if abs(np.pi - b - a) < abs(b - a):
        b = np.pi - b
    two_d = abs(b - a)
    if two_d > np.pi / 2 + 1e-12:
        raise NotApplicable(f"distance between extrema 2d = {two_d:.4f} exceeds pi/2") from None
    d = 0.5 * two_d
    direction = np.sign(b - a) or 1.0

    def theta_of(s):
        return a + (s + d) * direction

    M = float(us(a))
    u_d = float(us(b))

    # G and the outer integral of G / cos^2 are integrated together; the step
    # cap keeps the integrator from striding over spline knots
    def rhs(s, y):
        return [gs(theta_of(s)) * np.cos(s), y[0] / np.cos(s) ** 2]

    sol = solve_ivp(rhs, (-d, d), [0.0, 0.0], method="DOP853", rtol=1e-13, atol=1e-15, max_step=0.5 * grid.h)
    Gd, outer = (float(v) for v in sol.y[:, -1])
    u_repr = np.cos(d) * outer + M * np.cos(2 * d)
    err_repr = abs(u_repr - u_d)
    err_g = abs(Gd - (u_d + M) * np.sin(d))
    return MonitorReport(
        {
            "two_d": two_d,
            "M": M,
            "u_d": u_d,
            "u_d_repr": float(u_repr),
            "G_d": Gd,
            "ode_repr_err": float(max(err_repr, err_g)),
            "repr_err": float(err_repr),
            "g_identity_err": float(err_g),
            "degenerate": False,
        },
        {"ode_repr": True},
    )


# -- uniqueness ---------------------------------------------------------------------


def uniqueness_experiment(spec: ProblemSpec, starts: list, opts=None, continuation: bool = False) -> dict:
    """Solve from each start and tabulate pairwise sup-norm differences.

    With ``continuation=True`` each start is used as the initial guess for a
    t-continuation instead of a single Newton solve.  Failed runs are listed
    and left out of the table.
    """
    from .solver import continuation_solve, newton_solve

    sols, failures = [], []
    for i, u0 in enumerate(starts):
        try:
            if continuation:
                u, rep = continuation_solve(spec, opts, u0=u0)
            else:
                u, rep = newton_solve(spec, u0, opts)
            sols.append((i, u, rep))
        except SolverError as exc:
            failures.append({"start": i, "error": type(exc).__name__, "message": str(exc)})
    table = []
    for (i, ui, _), (j, uj, _) in combinations(sols, 2):
        table.append({"i": i, "j": j, "sup_diff": float(np.max(np.abs(ui.values - uj.values)))})
    anti = spec.grid.antipodal
    odd = [float(np.max(np.abs(u.values - u.values[anti]))) for _, u, _ in sols]
    return {
        "converged": [i for i, _, _ in sols],
        "failures": failures,
        "pairwise": table,
        "max_pairwise": max((r["sup_diff"] for r in table), default=0.0),
        "max_odd_part": max(odd, default=0.0),
        "iterations": [rep.iterations for _, _, rep in sols],
        "solutions": [u for _, u, _ in sols],
    }


# -- refinement studies -------------------------------------------------------------


def coarse_in_fine(coarse: sg.SphereGrid, fine: sg.SphereGrid):
    """Indices of fine nodes that coincide with coarse nodes, or None.

    Cell-centred colatitudes nest only when the refinement factor is odd;
    node ``j`` of the coarse grid sits at ``r j + (r - 1)/2`` on the fine one.
    """
    if coarse.kind != fine.kind or coarse.n != fine.n:
        return None
    r, rem = divmod(fine.resolution[0], coarse.resolution[0])
    if rem or r % 2 == 0:
        return None
    jt = r * np.arange(coarse.resolution[0]) + (r - 1) // 2
    if coarse.kind == sg.AXISYM:
        return jt
    Mc, Mf = coarse.resolution[1], fine.resolution[1]
    if Mf % Mc:
        return None
    mp = (Mf // Mc) * np.arange(Mc)
    return (jt[:, None] * Mf + mp[None, :]).ravel()


def manufactured_convergence(n: int, k: int, p0: float, kind: str, resolutions, amplitude: float = 0.1,
                             opts=None) -> dict:
    """Solve the manufactured problem on each grid and compare with the target.

    For consecutive grids that nest, the Richardson estimate of the fine-grid
    error is ``|u_fine - u_coarse| / (r^2 - 1)`` at the shared nodes.
    """
    from .problem import make_spec, manufactured_target
    from .solver import continuation_solve

    rows, prev = [], None
    for res in resolutions:
        grid = sg.build_grid(n, kind, res)
        spec = make_spec(grid, k, p0, f="manufactured", amplitude=amplitude)
        u, rep = continuation_solve(spec, opts)
        target = manufactured_target(grid, amplitude)
        row = {
            "resolution": list(grid.resolution),
            "error": float(np.max(np.abs(u.values - target.values))),
            "newton_per_step": max(rep.iterations),
            "richardson_estimate": None,
            "observed_ratio": None,
        }
        if prev is not None:
            pg, pu, perr = prev
            row["observed_ratio"] = perr / row["error"] if row["error"] > 0 else float("inf")
            idx = coarse_in_fine(pg, grid)
            if idx is not None:
                r = grid.resolution[0] // pg.resolution[0]
                diff = float(np.max(np.abs(u.values[idx] - pu.values)))
                row["richardson_estimate"] = diff / (r * r - 1)
        rows.append(row)
        prev = (grid, u, row["error"])
    return {"n": n, "k": k, "p0": p0, "kind": kind, "amplitude": amplitude, "rows": rows}

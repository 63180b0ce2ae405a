"""Discrete form of ``sigma_k(Hess u + (u + eps) g) = u^p0 f_t`` on a sphere grid.

The residual and its Jacobian are assembled from the sparse pieces of ``W``
provided by :mod:`cmk.spheregrid`, so the solver, the manufactured data and
the diagnostics all see one and the same discrete operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
import scipy.sparse as sp

from . import spheregrid as sg
from .errors import (
    DimensionMismatch,
    InvalidHomotopyParameter,
    InvalidOrder,
    NonpositiveSupport,
    NotInConeGammaK,
    OutOfRange,
    PositivityLost,
)
from .symfun import in_gamma_k, sigma_all, sigma_k_derivatives, sigma_k_eval, sigma_two_eigs

__all__ = [
    "ProblemSpec",
    "LinearOperator",
    "ConvexityCertificate",
    "CLOSED_FORMS",
    "closed_form_f",
    "make_spec",
    "residual",
    "linearize",
    "homotopy_f",
    "prop53_alpha",
    "prop53_u",
    "prop53_f",
    "prop53_q_coefficients",
    "prop53_example",
    "prop53_pbar",
    "manufactured_target",
    "check_f_convexity",
]

CLOSED_FORMS = ("constant", "prop53", "manufactured", "legendre2_bump")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One instance of the equation on a fixed grid.

    ``f`` is the target data at ``t = 1``; the residual uses the homotopy
    interpolant ``f_t`` (see :func:`homotopy_f`).
    """

    n: int
    k: int
    p0: float
    f: sg.ScalarField
    eps: float = 0.0
    t: float = 1.0

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise InvalidOrder(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if not 0.0 < self.p0 < self.k:
            raise OutOfRange(f"p0={self.p0} outside (0, k={self.k})")
        if self.eps < 0:
            raise OutOfRange(f"eps must be >= 0, got {self.eps}")
        if not 0.0 <= self.t <= 1.0:
            raise InvalidHomotopyParameter(f"t={self.t} outside [0, 1]")
        if self.f.grid.n != self.n:
            raise DimensionMismatch(f"f lives on S^{self.f.grid.n}, spec has n={self.n}")
        if np.any(self.f.values <= 0):
            raise NonpositiveSupport("f must be positive at every node")

    @property
    def grid(self) -> sg.SphereGrid:
        return self.f.grid

    @property
    def binom(self) -> int:
        return comb(self.n, self.k)

    def with_(self, **changes) -> "ProblemSpec":
        kw = dict(n=self.n, k=self.k, p0=self.p0, f=self.f, eps=self.eps, t=self.t)
        kw.update(changes)
        return ProblemSpec(**kw)

    def f_t(self) -> np.ndarray:
        return homotopy_f(self.t, self.f, self).values


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """Sparse Jacobian of :func:`residual` at a fixed ``u``."""

    grid: sg.SphereGrid
    matrix: sp.csr_matrix

    def __matmul__(self, v):
        return self.matrix @ np.asarray(v, dtype=float)

    def apply(self, v: sg.ScalarField) -> sg.ScalarField:
        return v.with_values(self.matrix @ v.values)

    def weighted_asymmetry(self, v, w) -> float:
        """``|<L v, w> - <v, L w>|`` in the quadrature inner product."""
        wt = self.grid.weights
        a = np.dot(wt * (self.matrix @ v), w)
        b = np.dot(wt * v, self.matrix @ w)
        return float(abs(a - b))


@dataclass(frozen=True)
class ConvexityCertificate:
    min_eigenvalue_of_W_gtilde: float
    q_coefficients: tuple | None
    q_min_on_interval: float | None
    passes: bool
    tolerance: float = 0.0

    def as_dict(self) -> dict:
        return {
            "min_eigenvalue_of_W_gtilde": self.min_eigenvalue_of_W_gtilde,
            "q_coefficients": None if self.q_coefficients is None else list(self.q_coefficients),
            "q_min_on_interval": self.q_min_on_interval,
            "passes": self.passes,
            "tolerance": self.tolerance,
        }


# -- closed forms ---------------------------------------------------------------


def prop53_alpha(k, p0) -> float:
    return k / (k - p0)


def prop53_u(y, k, p0):
    """``(1 - y)^alpha`` with ``y = x_{n+1}``."""
    return np.clip(1.0 - np.asarray(y, dtype=float), 0.0, None) ** prop53_alpha(k, p0)


def prop53_f(y, n, k, p0):
    a = prop53_alpha(k, p0)
    y = np.asarray(y, dtype=float)
    c = factorial(n - 1) / (factorial(k) * factorial(n - k))
    return c * (1 + (a - 1) * y) ** (k - 1) * (n + k * a * (a - 1) + (n + k * a) * (a - 1) * y)


def prop53_q_coefficients(n, k, p0) -> tuple:
    """Coefficients ``(c2, c1, c0)`` of the quadratic whose positivity on [-1, 1]
    is equivalent to the convexity condition for the prop53 data."""
    a = prop53_alpha(k, p0)
    c2 = k * (3 * a - 1) * (a - 1) ** 2 * (n + k * a)
    c1 = k * (a - 1) * (a * (n + (k - 1) * a * (a - 1) + a) + (2 * a - 1) * (2 * n + k * a * a))
    c0 = k * (2 * a - 1) * (n + k * a * (a - 1))
    return (c2, c1, c0)


def _quadratic_min(c, lo=-1.0, hi=1.0) -> float:
    c2, c1, c0 = c
    cand = [lo, hi]
    if c2 != 0:
        v = -c1 / (2 * c2)
        if lo < v < hi:
            cand.append(v)
    return float(min(c2 * y * y + c1 * y + c0 for y in cand))


def prop53_pbar(n: int, k: int, samples: int = 400, tol: float = 1e-8) -> float:
    """Largest ``p0 < k/2`` up to which the quadratic test passes for every smaller p0.

    Found by scanning and then bisecting the first sign change of the
    quadratic's minimum on [-1, 1].
    """
    top = 0.5 * k * (1 - 1e-9)
    grid = np.linspace(top / samples, top, samples)
    ok = np.array([_quadratic_min(prop53_q_coefficients(n, k, p)) > 0 for p in grid])
    if ok.all():
        return float(top)
    first_bad = int(np.argmin(ok))
    if first_bad == 0:
        return 0.0
    lo, hi = grid[first_bad - 1], grid[first_bad]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _quadratic_min(prop53_q_coefficients(n, k, mid)) > 0:
            lo = mid
        else:
            hi = mid
    return float(lo)


def _check_prop53(k, p0):
    if not 0 < p0 < 0.5 * k:
        raise PositivityLost(f"prop53 data needs 0 < p0 < k/2 = {0.5 * k}, got {p0}")


def prop53_example(n: int, k: int, p0: float, grid: sg.SphereGrid | None = None):
    """Closed-form degenerate pair ``(u, f, alpha)``; ``u`` vanishes at the north pole.

    The default grid is axisymmetric with J = 256.
    """
    _check_prop53(k, p0)
    if grid is None:
        grid = sg.build_grid(n, sg.AXISYM, 256)
    y = grid.xlast
    meta = {"kind": "prop53", "n": n, "k": k, "p0": p0}
    u = sg.ScalarField(grid, prop53_u(y, k, p0), meta=meta)
    f = sg.ScalarField(grid, prop53_f(y, n, k, p0), meta=meta)
    return u, f, prop53_alpha(k, p0)


def manufactured_target(grid: sg.SphereGrid, amplitude: float = 0.1) -> sg.ScalarField:
    """The even target ``1 + b x_{n+1}^2``."""
    return sg.ScalarField(grid, 1.0 + amplitude * grid.xlast**2, meta={"kind": "manufactured_target", "amplitude": amplitude})


def _manufactured_exact_f(grid, k, p0, eps, b):
    y2 = grid.xlast**2
    radial = 1 + 2 * b - 3 * b * y2 + eps
    tangential = 1 - b * y2 + eps
    return sigma_two_eigs(radial, tangential, grid.n, k) / (1 + b * y2) ** p0


def _discrete_f(u: np.ndarray, grid, k, p0, eps):
    W = sg.assemble_w(grid, u, eps)
    if not np.all(in_gamma_k(W, k)):
        raise NotInConeGammaK("target is not k-admissible at every node")
    if np.any(u <= 0):
        raise NonpositiveSupport("target must be positive at every node")
    return sigma_k_eval(W, k) / u**p0


def closed_form_f(kind: str, grid: sg.SphereGrid, k: int, p0: float, eps: float = 0.0, **params) -> sg.ScalarField:
    """Evaluate a registered right-hand side at the grid nodes.

    ``constant``        ``value`` (default ``C(n, k)``)
    ``prop53``          the degenerate example; no parameters
    ``manufactured``    data for the target ``1 + amplitude * x_{n+1}^2``; the
                        analytic value by default, or the discrete
                        ``sigma_k(W_h)/u^p0`` with ``discrete=True``
    ``legendre2_bump``  ``scale * (1 + amplitude * P_2(x_{n+1}))^{-(k+p0)}``
    """
    n = grid.n
    meta = {"kind": kind, **params}
    if kind == "constant":
        vals = np.full(grid.size, float(params.get("value", comb(n, k))))
    elif kind == "prop53":
        _check_prop53(k, p0)
        meta.update(n=n, k=k, p0=p0)
        vals = prop53_f(grid.xlast, n, k, p0)
    elif kind == "manufactured":
        b = float(params.get("amplitude", 0.1))
        if params.get("discrete", False):
            vals = _discrete_f(1.0 + b * grid.xlast**2, grid, k, p0, eps)
        else:
            vals = _manufactured_exact_f(grid, k, p0, eps, b)
    elif kind == "legendre2_bump":
        a = float(params.get("amplitude", 0.3))
        scale = float(params.get("scale", comb(n, k)))
        y = grid.xlast
        base = 1 + a * 0.5 * (3 * y * y - 1)
        if np.any(base <= 0):
            raise NonpositiveSupport(f"1 + {a} P2 is not positive on the sphere")
        vals = scale * base ** (-(k + p0))
    else:
        raise ValueError(f"unknown closed form {kind!r}; choose from {CLOSED_FORMS}")
    return sg.ScalarField(grid, vals, meta=meta)


def make_spec(grid, k, p0, f="constant", eps=0.0, t=1.0, **params) -> ProblemSpec:
    """Build a :class:`ProblemSpec` from a field or a closed-form name."""
    if isinstance(f, str):
        f = closed_form_f(f, grid, k, p0, eps=eps, **params)
    return ProblemSpec(n=grid.n, k=k, p0=p0, f=f, eps=eps, t=t)


# -- the equation -------------------------------------------------------------------


def homotopy_f(t: float, f: sg.ScalarField, spec: ProblemSpec) -> sg.ScalarField:
    """``(t f^{-1/q} + (1 - t) c^{-1/q})^{-q}`` with ``q = p0 + k``.

    The start value is ``c = C(n, k) (1 + eps)^k`` so that ``u = 1`` solves the
    ``t = 0`` problem for every ``eps``; with ``eps = 0`` it is ``C(n, k)``.
    """
    if not 0.0 <= t <= 1.0:
        raise InvalidHomotopyParameter(f"t={t} outside [0, 1]")
    if np.any(f.values <= 0):
        raise NonpositiveSupport("homotopy needs f > 0")
    if t == 1.0:
        return f
    q = spec.p0 + spec.k
    c0 = comb(spec.n, spec.k) * (1.0 + spec.eps) ** spec.k
    vals = (t * f.values ** (-1.0 / q) + (1.0 - t) * c0 ** (-1.0 / q)) ** (-q)
    return f.with_values(vals)


def _check_u(u):
    if np.any(u.values <= 0):
        raise NonpositiveSupport(f"u must be positive; min u = {u.values.min():.3e}")


def residual(u: sg.ScalarField, spec: ProblemSpec) -> sg.ScalarField:
    _check_u(u)
    W = sg.assemble_w(u.grid, u.values, spec.eps)
    return u.with_values(sigma_k_eval(W, spec.k) - u.values**spec.p0 * spec.f_t())


def _jacobian(grid, u, W, F, spec, ft):
    pieces, slot, indptr, indices = grid.w_pattern
    diag = np.trace(F, axis1=1, axis2=2) - spec.p0 * u ** (spec.p0 - 1) * ft
    coef = []
    for i, j, rows, vals in pieces:
        if i < 0:
            c = diag
        else:
            c = F[:, i, j] if i == j else F[:, i, j] + F[:, j, i]
        coef.append(c[rows] * vals)
    data = np.bincount(slot, weights=np.concatenate(coef), minlength=indices.size)
    N = grid.size
    return sp.csr_matrix((data, indices, indptr), shape=(N, N))


def linearize(u: sg.ScalarField, spec: ProblemSpec) -> LinearOperator:
    """Jacobian ``v -> sigma_k^{ij}(W_u) (W_v)_ij - p0 u^(p0-1) f_t v``."""
    _check_u(u)
    W = sg.assemble_w(u.grid, u.values, spec.eps)
    if not np.all(in_gamma_k(W, spec.k)):
        raise NotInConeGammaK("W_u is outside Gamma_k at some node")
    F, _ = sigma_k_derivatives(W, spec.k, hessian=False)
    return LinearOperator(u.grid, _jacobian(u.grid, u.values, W, F, spec, spec.f_t()))


def residual_raw(u: np.ndarray, spec: ProblemSpec, ft: np.ndarray):
    """Raw-array residual and admissibility flag, without the Jacobian."""
    W = sg.assemble_w(spec.grid, u, spec.eps)
    s = sigma_all(W, spec.k)
    return s[:, spec.k] - u**spec.p0 * ft, bool(np.all(s[:, 1:] > 0))


def residual_and_jacobian(u: np.ndarray, spec: ProblemSpec, ft: np.ndarray | None = None):
    """Raw-array variant used inside Newton: returns ``(R, J, admissible)``."""
    grid = spec.grid
    if ft is None:
        ft = spec.f_t()
    W = sg.assemble_w(grid, u, spec.eps)
    s = sigma_all(W, spec.k)
    F, _ = sigma_k_derivatives(W, spec.k, hessian=False)
    R = s[:, spec.k] - u**spec.p0 * ft
    return R, _jacobian(grid, u, W, F, spec, ft), bool(np.all(s[:, 1:] > 0))


# -- convexity condition on f ------------------------------------------------------


def check_f_convexity(f: sg.ScalarField, k: int, p0: float, tol: float | None = None) -> ConvexityCertificate:
    """Test ``Hess g + g I >= 0`` for ``g = f^{-1/(k+p0)}`` at every node.

    Passing means the smallest eigenvalue is at least ``-tol``, where by
    default ``tol = 1e-9 (1 + max g)``.  For prop53 data the quadratic ``Q``
    and its minimum on [-1, 1] are reported as well.
    """
    if np.any(f.values <= 0):
        raise NonpositiveSupport("f must be positive")
    g = f.values ** (-1.0 / (k + p0))
    Wg = sg.covariant_w(f.with_values(g), 0.0)
    lam = float(Wg.eigen_min.min())
    if tol is None:
        tol = 1e-9 * (1.0 + float(np.abs(g).max()))
    q = qmin = None
    meta = f.meta or {}
    if meta.get("kind") == "prop53":
        q = prop53_q_coefficients(f.grid.n, k, p0)
        qmin = _quadratic_min(q)
    return ConvexityCertificate(lam, q, qmin, lam >= -tol, tol)

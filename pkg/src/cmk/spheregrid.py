"""Structured grids on S^n and the discrete matrix ``W = Hess u + (u + eps) g``.

Two grid kinds are supported:

``axisym``
    Colatitude-only grid for axisymmetric fields on S^2 or S^3.  A node
    stands for the whole parallel at colatitude theta_j, and ``W`` is
    diagonal in the frame (e_theta, e_t, ...) with a radial entry
    ``u'' + u`` and ``n - 1`` tangential entries ``cot(theta) u' + u``.
``full2d``
    Latitude-longitude grid on S^2; ``W`` is the orthonormal-frame Hessian
    in (e_theta, e_phi).

Colatitudes are cell centred, ``theta_j = (j + 1/2) pi / J``, so no node sits
on a pole.  Quadrature weights are the exact measures of the cells.  Across a
pole, axisymmetric fields are reflected evenly and latitude-longitude fields
continue on the meridian at ``phi + pi``.

The second-order radial operator is the plain central difference.  The
``cot(theta) d/dtheta`` term is realised as the difference between the
finite-volume Laplacian and that central difference, which keeps it second
order while making ``trace W`` a conservative, quadrature-symmetric operator.

On the latitude-longitude grid the ``cot(theta) u_theta`` and
``u_phiphi / sin^2`` terms are each of size 1/theta next to a pole and cancel
only in combination.  To keep that cancellation second order on the pole
rows, the theta derivative in the cot term is fourth order (two ghost rows)
and the phi stencils are scaled to be exact on the first harmonics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidResolution, UnsupportedGrid

__all__ = [
    "AXISYM",
    "FULL2D",
    "SphereGrid",
    "ScalarField",
    "WField",
    "build_grid",
    "sphere_area",
    "covariant_w",
    "integrate",
    "symmetrize_even",
    "write_field_csv",
    "read_field_csv",
]

AXISYM = "axisym"
FULL2D = "full2d"
_KIND_ALIASES = {
    "axisym": AXISYM,
    "axisymmetric": AXISYM,
    "axisymmetric-1d": AXISYM,
    "1d": AXISYM,
    "full2d": FULL2D,
    "full-2d": FULL2D,
    "2d": FULL2D,
}


def sphere_area(n: int) -> float:
    """Surface measure of the unit S^n."""
    if n == 1:
        return 2 * np.pi
    if n == 2:
        return 4 * np.pi
    if n == 3:
        return 2 * np.pi**2
    raise UnsupportedGrid(f"S^{n} not supported")


def _sin_power_integral(a, b, power):
    """Integral of sin^power over [a, b] for power in {1, 2}."""
    if power == 1:
        return 2.0 * np.sin(0.5 * (a + b)) * np.sin(0.5 * (b - a))
    if power == 2:
        return 0.5 * (b - a) - 0.5 * np.cos(a + b) * np.sin(b - a)
    raise UnsupportedGrid(f"power {power}")


@dataclass(frozen=True, eq=False)
class SphereGrid:
    n: int
    kind: str
    resolution: tuple
    theta: np.ndarray
    phi: np.ndarray | None
    weights: np.ndarray
    antipodal: np.ndarray
    h: float
    dphi: float | None = None

    @property
    def size(self) -> int:
        return self.theta.size

    @property
    def shape(self) -> tuple:
        return tuple(self.resolution)

    @property
    def xlast(self) -> np.ndarray:
        """The height coordinate x_{n+1} = cos(theta) at every node."""
        return np.cos(self.theta)

    def ambient(self) -> np.ndarray:
        """Unit normals in R^{n+1}; axisymmetric nodes use the meridian through e_1."""
        st, ct = np.sin(self.theta), np.cos(self.theta)
        X = np.zeros((self.size, self.n + 1))
        if self.kind == FULL2D:
            X[:, 0] = st * np.cos(self.phi)
            X[:, 1] = st * np.sin(self.phi)
        else:
            X[:, 0] = st
        X[:, -1] = ct
        return X

    def field(self, values) -> "ScalarField":
        return ScalarField(self, np.asarray(values, dtype=float))

    def evaluate(self, fn) -> "ScalarField":
        """Sample ``fn(theta)`` (axisym) or ``fn(theta, phi)`` (full2d) at the nodes."""
        if self.kind == FULL2D:
            vals = fn(self.theta, self.phi)
        else:
            vals = fn(self.theta)
        return self.field(np.broadcast_to(vals, self.theta.shape).astype(float))

    @cached_property
    def w_terms(self):
        """Sparse pieces of W: list of ``(i, j, M)`` with ``W_ij = M u + delta_ij (u + eps)``.

        Only ``i <= j`` entries are listed; W is symmetric.
        """
        if self.kind == AXISYM:
            return _axisym_terms(self)
        return _full2d_terms(self)

    @cached_property
    def w_pattern(self):
        """Merged sparsity of all ``w_terms`` plus the diagonal.

        Returns ``(pieces, slot, indptr, indices)``: ``pieces`` lists
        ``(i, j, rows, vals)`` per term (the diagonal last, as ``i = j = -1``) and
        ``slot`` maps every concatenated triplet to its position in the CSR data.
        """
        N = self.size
        pieces, rows, cols = [], [], []
        for i, j, M in self.w_terms:
            C = M.tocoo()
            pieces.append((i, j, C.row, C.data))
            rows.append(C.row)
            cols.append(C.col)
        eye = np.arange(N)
        pieces.append((-1, -1, eye, np.ones(N)))
        rows.append(eye)
        cols.append(eye)
        key = np.concatenate(rows).astype(np.int64) * N + np.concatenate(cols)
        uniq, slot = np.unique(key, return_inverse=True)
        indptr = np.concatenate([[0], np.cumsum(np.bincount(uniq // N, minlength=N))])
        return pieces, slot, indptr, (uniq % N).astype(np.int32)

    @cached_property
    def grad_ops(self):
        """Sparse operators giving the frame components of grad u."""
        if self.kind == AXISYM:
            D1 = _axisym_d1(self)
            return [D1] + [None] * (self.n - 1)
        J, M = self.resolution
        Dt = _latlon_dtheta(J, M, self.h)
        Dp = _latlon_dphi(J, M, self.dphi)
        return [Dt, sp.diags(1.0 / np.sin(self.theta)) @ Dp]


def build_grid(n: int, kind: str = AXISYM, resolution=64) -> SphereGrid:
    """Cell-centred grid on S^n.

    ``resolution`` is ``J`` for axisymmetric grids and ``(J, M)`` (colatitude
    by longitude counts) for full2d grids; a bare ``J`` there means ``(J, 2J)``.
    """
    kind = _KIND_ALIASES.get(str(kind).lower())
    if kind is None:
        raise UnsupportedGrid(f"unknown grid kind {kind!r}")
    if n not in (2, 3):
        raise UnsupportedGrid(f"only S^2 and S^3 are supported, got n={n}")
    if kind == FULL2D and n != 2:
        raise UnsupportedGrid("full2d grids exist only for n = 2")
    if kind == AXISYM:
        J = int(np.atleast_1d(resolution)[0])
        res = (J,)
    else:
        r = np.atleast_1d(resolution)
        res = (int(r[0]), int(r[1]) if r.size > 1 else 2 * int(r[0]))
    for c in res:
        if c < 8 or c % 2:
            raise InvalidResolution(f"resolution {res}: each count must be even and >= 8")
    J = res[0]
    h = np.pi / J
    th = (np.arange(J) + 0.5) * h
    lo, hi = th - 0.5 * h, th + 0.5 * h
    if kind == AXISYM:
        w = sphere_area(n - 1) * _sin_power_integral(lo, hi, n - 1)
        anti = np.arange(J)[::-1].copy()
        return SphereGrid(n, kind, res, th, None, w, anti, h)
    M = res[1]
    dphi = 2 * np.pi / M
    ph = np.arange(M) * dphi
    T, P = np.meshgrid(th, ph, indexing="ij")
    w = np.repeat(dphi * _sin_power_integral(lo, hi, 1), M)
    jj, mm = np.meshgrid(np.arange(J), np.arange(M), indexing="ij")
    anti = ((J - 1 - jj) * M + (mm + M // 2) % M).ravel()
    return SphereGrid(n, kind, res, T.ravel(), P.ravel(), w, anti, h, dphi)


# -- axisymmetric operators ---------------------------------------------------


def _tridiag(lower, diag, upper):
    return sp.diags([lower, diag, upper], [-1, 0, 1], format="csr")


def _fold_even_ghosts(J, lower, diag, upper):
    # u_{-1} = u_0 and u_J = u_{J-1}: ghost coefficients land on the diagonal
    diag = diag.copy()
    diag[0] += lower[0]
    diag[-1] += upper[-1]
    return _tridiag(lower[1:], diag, upper[:-1])


def _axisym_d2(g):
    J, h = g.resolution[0], g.h
    one = np.full(J, 1.0 / h**2)
    return _fold_even_ghosts(J, one, -2 * one, one)


def _axisym_d1(g):
    J, h = g.resolution[0], g.h
    c = np.full(J, 0.5 / h)
    return _fold_even_ghosts(J, -c, np.zeros(J), c)


def _face_sines(g, power):
    J = g.resolution[0]
    faces = np.arange(J + 1) * g.h
    s = np.sin(faces) ** power
    s[0] = s[-1] = 0.0
    return s


def _conservative_theta_laplacian(g, cell_w, face_scale):
    """Finite-volume d/dtheta(s^(n-1) du/dtheta) / s^(n-1) with exact cell measures."""
    J, h = g.resolution[0], g.h
    s = face_scale * _face_sines(g, g.n - 1)
    up = s[1:] / (h * cell_w)
    lo = s[:-1] / (h * cell_w)
    return _tridiag(lo[1:], -(up + lo), up[:-1])


def _axisym_terms(g):
    D2 = _axisym_d2(g)
    L = _conservative_theta_laplacian(g, g.weights, sphere_area(g.n - 1))
    T = (L - D2) / (g.n - 1)
    terms = [(0, 0, D2)]
    for t in range(1, g.n):
        terms.append((t, t, T))
    return terms


# -- latitude-longitude operators --------------------------------------------


def _latlon_row_shift(J, M, dj):
    """Index of the node ``dj`` rows away, continuing over a pole at ``phi + pi``.

    Returns ``(cols, sign)``; ``sign`` is -1 where the path crossed a pole,
    which is the factor picked up by e_theta and e_phi there.
    """
    jj, mm = np.meshgrid(np.arange(J), np.arange(M), indexing="ij")
    t = jj + dj
    sign = np.ones_like(t)
    flip_n = t < 0
    flip_s = t > J - 1
    t = np.where(flip_n, -1 - t, t)
    t = np.where(flip_s, 2 * J - 1 - t, t)
    m = np.where(flip_n | flip_s, (mm + M // 2) % M, mm)
    sign[flip_n | flip_s] = -1
    return (t * M + m).ravel(), sign.ravel()


def _shift_phi(idx, M, s):
    j, m = np.divmod(idx, M)
    return j * M + (m + s) % M


def _coo(N, rows, cols, vals):
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )


def _latlon_dtheta(J, M, h, odd=False):
    """Central theta derivative; ``odd`` flips ghost values (vector components)."""
    i = np.arange(J * M)
    sth, s1 = _latlon_row_shift(J, M, 1)
    nrt, s2 = _latlon_row_shift(J, M, -1)
    c = np.full(i.size, 0.5 / h)
    a, b = (s1, s2) if odd else (1, 1)
    return _coo(J * M, [i, i], [sth, nrt], [a * c, -b * c])


def _latlon_dtheta4(J, M, h):
    i = np.arange(J * M)
    cols = [_latlon_row_shift(J, M, d)[0] for d in (2, 1, -1, -2)]
    c = np.full(i.size, 1.0 / (12 * h))
    return _coo(J * M, [i] * 4, cols, [-c, 8 * c, -8 * c, c])


def _latlon_d2theta(J, M, h):
    i = np.arange(J * M)
    sth, _ = _latlon_row_shift(J, M, 1)
    nrt, _ = _latlon_row_shift(J, M, -1)
    c = np.full(i.size, 1.0 / h**2)
    return _coo(J * M, [i, i, i], [sth, i, nrt], [c, -2 * c, c])


def _latlon_dphi(J, M, dphi):
    # scaled to be exact on cos(phi), sin(phi)
    i = np.arange(J * M)
    c = np.full(i.size, 0.5 / np.sin(dphi))
    return _coo(J * M, [i, i], [_shift_phi(i, M, 1), _shift_phi(i, M, -1)], [c, -c])


def _latlon_d2phi(J, M, dphi):
    i = np.arange(J * M)
    c = np.full(i.size, 0.5 / (1.0 - np.cos(dphi)))
    return _coo(J * M, [i, i, i], [_shift_phi(i, M, 1), i, _shift_phi(i, M, -1)], [c, -2 * c, c])


def _full2d_terms(g):
    J, M = g.resolution
    h, dphi = g.h, g.dphi
    st = np.sin(g.theta)
    ct = np.cos(g.theta)
    Dp = _latlon_dphi(J, M, dphi)
    W_tt = _latlon_d2theta(J, M, h)
    # W_tp = d/dtheta (u_phi / sin theta); the quotient is the e_phi component
    # of grad u, so it changes sign across a pole
    W_tp = _latlon_dtheta(J, M, h, odd=True) @ sp.diags(1.0 / st) @ Dp
    # the two 1/theta-singular pieces cancel on first harmonics only if both
    # are accurate beyond O(h^2) there
    W_pp = sp.diags(1.0 / st**2) @ _latlon_d2phi(J, M, dphi) + sp.diags(ct / st) @ _latlon_dtheta4(J, M, h)
    return [(0, 0, W_tt.tocsr()), (0, 1, W_tp.tocsr()), (1, 1, W_pp.tocsr())]


# -- fields --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values on a grid.

    ``meta`` optionally records where the values came from (for instance a
    closed-form name and its parameters); it is dropped by :meth:`with_values`.
    """

    grid: SphereGrid
    values: np.ndarray
    meta: dict | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError(f"field has {v.shape} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class WField:
    grid: SphereGrid
    W: np.ndarray
    grad: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def eigen_min(self) -> np.ndarray:
        return self.eigenvalues[:, 0]

    @property
    def eigen_max(self) -> np.ndarray:
        return self.eigenvalues[:, -1]


def assemble_w(grid: SphereGrid, u: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Stack of W matrices ``(N, n, n)`` for raw nodal values ``u``."""
    n = grid.n
    W = np.zeros((grid.size, n, n))
    for i, j, M in grid.w_terms:
        W[:, i, j] = M @ u
        if i != j:
            W[:, j, i] = W[:, i, j]
    idx = np.arange(n)
    W[:, idx, idx] += (u + eps)[:, None]
    return W


def gradient(grid: SphereGrid, u: np.ndarray) -> np.ndarray:
    G = np.zeros((grid.size, grid.n))
    for s, D in enumerate(grid.grad_ops):
        if D is not None:
            G[:, s] = D @ u
    return G


def covariant_w(u: ScalarField, eps: float = 0.0) -> WField:
    """Discrete ``W_u^eps`` and ``grad u`` in the grid's orthonormal frame."""
    g = u.grid
    W = assemble_w(g, u.values, eps)
    G = gradient(g, u.values)
    return WField(g, W, G, np.linalg.eigvalsh(W))


def integrate(f: ScalarField) -> float:
    return float(np.dot(f.values, f.grid.weights))


def symmetrize_even(f: ScalarField) -> ScalarField:
    v = f.values
    return f.with_values(0.5 * (v + v[f.grid.antipodal]))


# -- CSV -----------------------------------------------------------------------


def write_field_csv(f: ScalarField, path) -> None:
    g = f.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if g.kind == FULL2D:
            w.writerow(["theta", "phi", "value"])
            for t, p, v in zip(g.theta, g.phi, f.values):
                w.writerow([repr(float(t)), repr(float(p)), repr(float(v))])
        else:
            w.writerow(["theta", "value"])
            for t, v in zip(g.theta, f.values):
                w.writerow([repr(float(t)), repr(float(v))])


def read_field_csv(path, n: int | None = None) -> ScalarField:
    """Load a field written by :func:`write_field_csv`.

    Files with a ``phi`` column are read as full2d fields on S^2; otherwise
    the sphere dimension ``n`` must be supplied.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = [c.strip() for c in rows[0]]
    data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    if header == ["theta", "phi", "value"]:
        theta = np.unique(data[:, 0])
        phi = np.unique(data[:, 1])
        grid = build_grid(2, FULL2D, (theta.size, phi.size))
    elif header == ["theta", "value"]:
        if n is None:
            raise ValueError("axisymmetric CSV needs the sphere dimension n")
        grid = build_grid(n, AXISYM, data.shape[0])
    else:
        raise ValueError(f"unrecognised CSV header {header}")
    if data.shape[0] != grid.size or not np.allclose(data[:, 0], grid.theta, atol=1e-12):
        raise ValueError("CSV nodes do not match a cell-centred grid in (theta, phi) order")
    return ScalarField(grid, data[:, -1])

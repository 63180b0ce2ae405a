"""Hypersurface reconstruction from a support function, plus OBJ/CSV export.

The point of the body with outer normal ``x`` is ``u(x) x + grad u(x)``; the
principal radii there are the eigenvalues of ``W_u``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import spheregrid as sg

__all__ = [
    "BodyMesh",
    "embed_body",
    "principal_radii",
    "revolve_profile",
    "write_obj",
    "read_obj",
    "write_profile_csv",
    "export_mesh",
    "face_areas",
]


@dataclass
class BodyMesh:
    """Embedded vertices (one per grid node) with connectivity and radii.

    On a latitude-longitude grid ``faces`` are triangles.  On an axisymmetric
    grid the vertices trace a meridian in the ``(x_1, x_{n+1})`` plane and
    ``faces`` holds the polyline segments of that profile, and
    ``frame_radii`` keeps the diagonal of ``W`` (radial first) in grid order.
    """

    vertices: np.ndarray
    faces: np.ndarray
    radii: np.ndarray
    kind: str
    theta: np.ndarray
    non_convex: bool = False
    frame_radii: np.ndarray | None = None

    @property
    def is_profile(self) -> bool:
        return self.kind == sg.AXISYM


def _frame_vectors(grid: sg.SphereGrid):
    """Ambient images of the frame vectors that carry grad u."""
    th = grid.theta
    st, ct = np.sin(th), np.cos(th)
    E = np.zeros((grid.n, grid.size, grid.n + 1))
    if grid.kind == sg.AXISYM:
        E[0, :, 0] = ct
        E[0, :, -1] = -st
        return E  # tangential components of grad u vanish
    ph = grid.phi
    E[0] = np.stack([ct * np.cos(ph), ct * np.sin(ph), -st], axis=1)
    E[1] = np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)], axis=1)
    return E


def _latlon_faces(J: int, M: int) -> np.ndarray:
    idx = np.arange(J * M).reshape(J, M)
    nxt = np.roll(idx, -1, axis=1)
    tris = []
    for j in range(J - 1):
        a, b, c, d = idx[j], nxt[j], idx[j + 1], nxt[j + 1]
        tris.append(np.stack([a, c, b], axis=1))
        tris.append(np.stack([b, c, d], axis=1))
    # each polar ring is closed by a fan from its first vertex; no extra vertices
    ring = np.arange(1, M - 1)
    north = np.stack([np.zeros_like(ring), ring, ring + 1], axis=1)
    south = (J - 1) * M + np.stack([np.zeros_like(ring), ring + 1, ring], axis=1)
    return np.concatenate(tris + [north, south]).astype(np.int64)


def principal_radii(u: sg.ScalarField) -> list:
    """Sorted eigenvalues of ``W_u`` at every node, one field per index."""
    lam = sg.covariant_w(u, 0.0).eigenvalues
    return [u.with_values(lam[:, i]) for i in range(lam.shape[1])]


def embed_body(u: sg.ScalarField, tol: float = 0.0) -> BodyMesh:
    """Vertices ``u x + grad u``; ``non_convex`` is set when some radius is below ``tol``."""
    grid = u.grid
    wf = sg.covariant_w(u, 0.0)
    X = u.values[:, None] * grid.ambient()
    E = _frame_vectors(grid)
    for s in range(grid.n):
        X += wf.grad[:, s, None] * E[s]
    if grid.kind == sg.AXISYM:
        faces = np.stack([np.arange(grid.size - 1), np.arange(1, grid.size)], axis=1)
    else:
        faces = _latlon_faces(*grid.resolution)
    non_convex = bool(np.any(wf.eigen_min < tol))
    diag = np.diagonal(wf.W, axis1=1, axis2=2).copy() if grid.kind == sg.AXISYM else None
    return BodyMesh(X, faces, wf.eigenvalues, grid.kind, grid.theta.copy(), non_convex, diag)


def revolve_profile(mesh: BodyMesh, longitudes: int = 64):
    """Surface of revolution in R^3 swept by an axisymmetric profile.

    Only the ``(x_1, x_{n+1})`` section is used, so for ``n > 2`` this is the
    three-dimensional section through the axis.
    """
    if not mesh.is_profile:
        raise ValueError("revolve_profile needs an axisymmetric mesh")
    if longitudes < 3:
        raise ValueError("need at least 3 longitudes")
    r = mesh.vertices[:, 0]
    z = mesh.vertices[:, -1]
    ph = 2 * np.pi * np.arange(longitudes) / longitudes
    V = np.stack(
        [np.outer(r, np.cos(ph)).ravel(), np.outer(r, np.sin(ph)).ravel(), np.repeat(z, longitudes)],
        axis=1,
    )
    return V, _latlon_faces(r.size, longitudes)


def face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    V = np.asarray(vertices)[:, :3]
    a, b, c = (V[faces[:, i]] for i in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def write_obj(path, vertices, faces) -> None:
    """Wavefront OBJ, 1-based faces.  Coordinates use ``repr`` so they reparse exactly."""
    V = np.asarray(vertices, dtype=float)
    F = np.asarray(faces, dtype=np.int64)
    with open(path, "w") as fh:
        for row in V:
            fh.write("v " + " ".join(repr(float(x)) for x in row) + "\n")
        for tri in F:
            fh.write("f " + " ".join(str(int(i) + 1) for i in tri) + "\n")


def read_obj(path):
    """Return ``(vertices, faces)`` with 0-based faces; texture/normal indices are ignored."""
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:]])
    return np.array(verts, dtype=float), np.array(faces, dtype=np.int64)


def write_profile_csv(path, mesh: BodyMesh) -> None:
    """Meridian profile with the radial and tangential principal radii."""
    if not mesh.is_profile:
        raise ValueError("profile export needs an axisymmetric mesh")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "radius_radial", "radius_tangential", "X1", "X2"])
        for i in range(mesh.theta.size):
            w.writerow([repr(float(v)) for v in (
                mesh.theta[i], mesh.frame_radii[i, 0], mesh.frame_radii[i, 1],
                mesh.vertices[i, 0], mesh.vertices[i, -1],
            )])


def export_mesh(u: sg.ScalarField, obj_path=None, profile_path=None, longitudes: int = 64) -> BodyMesh:
    """Embed ``u`` and write whichever outputs are requested."""
    mesh = embed_body(u)
    if mesh.is_profile:
        if profile_path is not None:
            write_profile_csv(profile_path, mesh)
        if obj_path is not None:
            write_obj(obj_path, *revolve_profile(mesh, longitudes))
    elif obj_path is not None:
        write_obj(obj_path, mesh.vertices, mesh.faces)
    return mesh

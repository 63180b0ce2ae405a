import numpy as np
import pytest

from cmk import geometry as ge
from cmk import spheregrid as sg
from cmk.problem import prop53_example


def signed_volume(V, F):
    return np.einsum("ij,ij->i", V[F[:, 0]], np.cross(V[F[:, 1]], V[F[:, 2]])).sum() / 6


@pytest.mark.parametrize("kind, res, n", [("full2d", (32, 64), 2), ("axisym", 64, 3), ("axisym", 64, 2)])
@pytest.mark.parametrize("r", [1.0, 2.5])
def test_round_sphere(kind, res, n, r):
    g = sg.build_grid(n, kind, res)
    mesh = ge.embed_body(g.field(np.full(g.size, r)))
    assert mesh.vertices.shape == (g.size, n + 1)
    np.testing.assert_allclose(np.linalg.norm(mesh.vertices, axis=1), r, atol=1e-10)
    np.testing.assert_allclose(mesh.radii, r, atol=1e-10)
    assert not mesh.non_convex


def test_translation_covariance():
    errs = []
    for J in (32, 64):
        g = sg.build_grid(2, "full2d", J)
        X = g.ambient()
        base = g.field(1 + 0.1 * X[:, 0] * X[:, 1] + 0.1 * X[:, 2] ** 2)
        moved = base.with_values(base.values + 0.2 * g.xlast)
        m0, m1 = ge.embed_body(base), ge.embed_body(moved)
        shift = m1.vertices - m0.vertices - [0, 0, 0.2]
        errs.append((np.abs(shift).max(), np.abs(m1.radii - m0.radii).max()))
    assert errs[0][0] / errs[1][0] >= 3.5
    assert errs[0][1] / errs[1][1] >= 3.5


def test_translated_unit_sphere():
    g = sg.build_grid(2, "full2d", 64)
    mesh = ge.embed_body(g.field(1 + 0.2 * g.xlast))
    d = np.linalg.norm(mesh.vertices - [0, 0, 0.2], axis=1)
    np.testing.assert_allclose(d, 1.0, atol=1e-6)
    pr = ge.principal_radii(g.field(1 + 0.2 * g.xlast))
    assert len(pr) == 2
    for f in pr:
        np.testing.assert_allclose(f.values, 1.0, atol=1e-3)


def test_full2d_mesh_is_valid_and_closed():
    g = sg.build_grid(2, "full2d", (32, 64))
    X = g.ambient()
    mesh = ge.embed_body(g.field(1 + 0.1 * X[:, 2] ** 2))
    F = mesh.faces
    assert F.min() == 0 and F.max() == g.size - 1
    assert ge.face_areas(mesh.vertices, F).min() > 0
    # every edge is shared by exactly two faces, with opposite orientation
    edges = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
    as_set = {tuple(e) for e in edges.tolist()}
    assert len(as_set) == len(edges)
    assert all((b, a) in as_set for a, b in as_set)
    assert signed_volume(mesh.vertices, F) > 0


def test_revolved_profile():
    g = sg.build_grid(3, "axisym", 64)
    mesh = ge.embed_body(g.field(np.ones(g.size)))
    V, F = ge.revolve_profile(mesh, 48)
    assert V.shape == (64 * 48, 3)
    np.testing.assert_allclose(np.linalg.norm(V, axis=1), 1.0, atol=1e-12)
    assert ge.face_areas(V, F).min() > 0
    assert signed_volume(V, F) == pytest.approx(4 * np.pi / 3, rel=5e-3)
    with pytest.raises(ValueError):
        ge.revolve_profile(mesh, 2)


def test_prop53_flat_point():
    radial, gap = [], []
    for J in (64, 256, 1024):
        u, _, _ = prop53_example(3, 2, 0.2, sg.build_grid(3, "axisym", J))
        mesh = ge.embed_body(u)
        radial.append(mesh.frame_radii[0, 0])
        # the pole-adjacent vertex approaches the origin, where the body is flat
        gap.append(np.linalg.norm(mesh.vertices[0]))
    assert radial[0] > radial[1] > radial[2]
    assert gap[0] > gap[1] > gap[2]


def test_non_convex_flag():
    g = sg.build_grid(2, "axisym", 64)
    P2 = 0.5 * (3 * g.xlast**2 - 1)
    mesh = ge.embed_body(g.field(1 + 0.9 * P2))
    assert mesh.non_convex


def test_obj_round_trip_bit_exact(tmp_path):
    g = sg.build_grid(2, "full2d", (16, 32))
    X = g.ambient()
    mesh = ge.embed_body(g.field(np.pi / 3 + 0.1 * X[:, 0] ** 2))
    path = tmp_path / "body.obj"
    ge.write_obj(path, mesh.vertices, mesh.faces)
    V, F = ge.read_obj(path)
    np.testing.assert_array_equal(V, mesh.vertices)
    np.testing.assert_array_equal(F, mesh.faces)
    first_face = next(l for l in path.read_text().splitlines() if l.startswith("f "))
    assert min(int(t) for t in first_face.split()[1:]) >= 1


def test_export_axisym_outputs(tmp_path):
    g = sg.build_grid(3, "axisym", 32)
    u = g.field(1 + 0.1 * g.xlast**2)
    mesh = ge.export_mesh(u, tmp_path / "m.obj", tmp_path / "p.csv", longitudes=16)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "theta,radius_radial,radius_tangential,X1,X2"
    assert len(lines) == g.size + 1
    row = [float(x) for x in lines[5].split(",")]
    assert row[0] == g.theta[4]
    assert row[1] == mesh.frame_radii[4, 0] and row[3] == mesh.vertices[4, 0]
    V, _ = ge.read_obj(tmp_path / "m.obj")
    assert V.shape == (g.size * 16, 3)
    with pytest.raises(ValueError):
        ge.write_profile_csv(tmp_path / "x.csv", ge.embed_body(sg.build_grid(2, "full2d", 8).field(np.ones(128))))

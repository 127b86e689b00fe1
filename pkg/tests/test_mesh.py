import numpy as np
import pytest

from wglsm.errors import GeometryError, MeshGeometryMismatch
from wglsm.geometry import Penetrable, ScenarioGeometry, SoundSoft, bump_polyline, disk_polygon
from wglsm.mesh import BoundaryTag, Mesh, RegionTag, build_mesh, read_mesh, write_mesh
from wglsm.modes import WaveguideSpec

SPEC = WaveguideSpec.from_mode_count(4)


@pytest.fixture(scope="module")
def bump_mesh():
    geo = ScenarioGeometry(SPEC, (bump_polyline(-0.5, 0.5, 0.2),), x_star=-1.0, x_L=-2.0)
    return geo, build_mesh(geo, 0.05)


def test_area_and_size(bump_mesh):
    geo, mesh = bump_mesh
    assert mesh.areas().min() > 0
    assert mesh.areas().sum() == pytest.approx(geo.fluid_polygon().area, rel=1e-12)
    assert mesh.edge_lengths().max() <= 0.05 * (1 + 1e-9)


def test_boundary_tags(bump_mesh):
    geo, mesh = bump_mesh
    v = mesh.vertices
    trunc = mesh.tagged_nodes(BoundaryTag.TRUNCATION)
    assert np.allclose(v[trunc, 0], -2.0)
    gamma = mesh.tagged_nodes(BoundaryTag.GAMMA)
    assert len(gamma) > 0 and np.all(v[gamma, 0] >= -0.75 - 1e-12)
    e = mesh.tagged_edges(BoundaryTag.TRUNCATION)
    d = mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]]
    assert np.hypot(d[:, 0], d[:, 1]).sum() == pytest.approx(1.0)


def test_bump_vertices_are_mesh_vertices(bump_mesh):
    geo, mesh = bump_mesh
    chain = geo.deformation[0]
    d = np.min(np.hypot(mesh.vertices[:, None, 0] - chain[None, :, 0],
                        mesh.vertices[:, None, 1] - chain[None, :, 1]), axis=0)
    assert d.max() < 1e-12


def test_roundtrip(tmp_path, bump_mesh):
    _, mesh = bump_mesh
    p = tmp_path / "m.txt"
    write_mesh(mesh, p)
    back = read_mesh(p)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    np.testing.assert_array_equal(back.edge_tags, mesh.edge_tags)


def test_read_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("VERTICES\n0 0\n1 0\nTRIANGLES\n0 1 7\n")
    with pytest.raises(MeshGeometryMismatch, match="bad.txt"):
        read_mesh(p)


def test_validate_detects_degenerate():
    verts = np.array([[0, 0], [1, 0], [2, 0], [0, 1]], dtype=float)
    tris = np.array([[0, 1, 2], [0, 1, 3]])
    m = Mesh(verts, tris, np.zeros((0, 2), int), np.zeros(0, int), np.zeros(2, int))
    with pytest.raises(MeshGeometryMismatch):
        m.validate()


def test_scatterer_regions():
    pen = Penetrable(disk_polygon((-0.8, 0.5), 0.15, h=0.03), 2.0)
    geo = ScenarioGeometry(SPEC, scatterer=pen, x_star=-1.0, x_L=-2.0)
    mesh = build_mesh(geo, 0.05)
    inner = mesh.region_tags == RegionTag.INTERIOR
    assert inner.any()
    area = mesh.areas()[inner].sum()
    assert area == pytest.approx(np.pi * 0.15 ** 2, rel=2e-2)
    soft = ScenarioGeometry(SPEC, scatterer=SoundSoft(disk_polygon((-0.8, 0.5), 0.15)),
                            x_star=-1.0, x_L=-2.0)
    m2 = build_mesh(soft, 0.05)
    assert len(m2.tagged_nodes(BoundaryTag.SCATTERER)) > 0
    assert np.all(m2.region_tags == RegionTag.FLUID)


def test_bad_h():
    with pytest.raises(GeometryError):
        build_mesh(ScenarioGeometry(SPEC), -1.0)

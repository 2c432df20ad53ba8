import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ellipara import shapes
from ellipara.mesh import (MeshError, TriMesh, face_areas, face_geometry, face_regularity,
                           load_mesh, validate_topology, write_mesh)


def test_obj_tetrahedron(tmp_path):
    p = tmp_path / "t.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n")
    m = load_mesh(p)
    assert (m.n_vertices, m.n_faces) == (4, 4)
    assert validate_topology(m).is_sphere


def test_off_icosahedron(tmp_path):
    p = tmp_path / "ico.off"
    write_mesh(shapes.icosahedron(), p)
    m = load_mesh(p)
    assert (m.n_vertices, m.n_faces) == (12, 20)


def test_quad_face_rejected(tmp_path):
    p = tmp_path / "q.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(MeshError, match="non-triangular face"):
        load_mesh(p)


def test_unsupported_format(tmp_path):
    with pytest.raises(MeshError):
        write_mesh(shapes.tetrahedron(), tmp_path / "m.stl")


@pytest.mark.parametrize("ext", ["obj", "off", "ply"])
def test_round_trip(tmp_path, ext):
    m = shapes.tetrahedron()
    write_mesh(m, tmp_path / f"m.{ext}")
    back = load_mesh(tmp_path / f"m.{ext}")
    np.testing.assert_array_equal(back.faces, m.faces)
    np.testing.assert_allclose(back.vertices, m.vertices, atol=1e-14, rtol=0)


def test_topology_counts():
    t = validate_topology(shapes.tetrahedron())
    assert (t.euler_characteristic, t.genus, t.closed) == (2, 0, True)
    tor = validate_topology(shapes.torus(8, 8))
    assert (tor.n_vertices, tor.n_edges, tor.n_faces) == (64, 192, 128)
    assert tor.euler_characteristic == 0 and tor.genus == 1
    assert tor.describe() == "genus 1"
    tri = validate_topology(TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]]))
    assert tri.boundary_edges == 3 and not tri.closed


def test_regularity_scores():
    eq = TriMesh([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]], [[0, 1, 2]])
    assert face_regularity(eq, 0) == pytest.approx(1.0, abs=1e-15)
    iso = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    assert face_regularity(iso, 0) == pytest.approx(np.sqrt(3) / 2, abs=1e-15)
    # sides 1, 1, 1.999
    h = np.sqrt(1 - (1.999 / 2) ** 2)
    needle = TriMesh([[0, 0, 0], [1.999, 0, 0], [1.999 / 2, h, 0]], [[0, 1, 2]])
    assert face_regularity(needle, 0) < 0.1


def test_face_geometry():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    g = face_geometry(m, 0)
    assert g.area == pytest.approx(0.5)
    np.testing.assert_allclose(g.angles, [np.pi / 2, np.pi / 4, np.pi / 4], atol=1e-15)
    eq = TriMesh([[0, 0, 0], [2, 0, 0], [1, np.sqrt(3), 0]], [[0, 1, 2]])
    assert face_geometry(eq, 0).area == pytest.approx(np.sqrt(3))
    flat = TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    g = face_geometry(flat, 0)
    assert g.area == 0 and g.degenerate


def test_repeated_vertex_rejected():
    with pytest.raises(MeshError):
        TriMesh(np.zeros((3, 3)), [[0, 0, 1]])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6))
def test_geodesic_sphere_is_genus_zero(freq):
    m = shapes.geodesic_sphere(freq)
    assert validate_topology(m).is_sphere
    assert m.n_faces == 20 * freq ** 2
    assert np.all(face_areas(m.vertices, m.faces) > 0)

import numpy as np
import pytest

from mcflab.mesh import (MeshParseError, NonManifoldError, TriMesh, load_mesh,
                         primitives, write_obj)
from mcflab.mesh.geometry import gauss_bonnet_residual
from mcflab.mesh.queries import area_in_ball, intrinsic_distance


def test_icosphere_counts_and_euler():
    m = primitives.icosphere(5)
    assert m.n_vertices == 10242
    assert m.euler() == 2


def test_sphere_curvature(sphere2):
    geo = sphere2.geometry()
    assert np.allclose(geo.H, 1.0, atol=1e-3)
    assert np.allclose(geo.A2, 0.5, atol=1e-3)


def test_gauss_bonnet(sphere2):
    assert abs(gauss_bonnet_residual(sphere2)) < 1e-10


def test_obj_roundtrip(tmp_path, sphere2):
    p = tmp_path / "s.obj"
    write_obj(sphere2, str(p))
    m = load_mesh(str(p))
    assert np.array_equal(m.faces, sphere2.faces)
    assert np.allclose(m.vertices, sphere2.vertices, rtol=0, atol=0)


def test_bad_obj(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nf 1 2 3\n")
    with pytest.raises(MeshParseError):
        load_mesh(str(p))


def test_nonmanifold_edge():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1.0]])
    f = np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    with pytest.raises(NonManifoldError):
        TriMesh(v, f)


def test_area_in_ball_flat_disk():
    p = primitives.plane_grid(2.0, 81, jitter=0.3)
    assert abs(area_in_ball(p, [0, 0, 0], 1) / np.pi - 1) < 1e-10
    assert area_in_ball(p, [0, 0, 2], 1) == 0


def test_geodesic_on_sphere(unit_sphere):
    d = intrinsic_distance(unit_sphere, 0)
    assert abs(d.max() / np.pi - 1) < 0.02

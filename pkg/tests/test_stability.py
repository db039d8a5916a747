import numpy as np
import pytest

from mcflab import stability
from mcflab.mesh import primitives


def test_constant_on_sphere(sphere2):
    q, _ = stability.quadratic_form(sphere2, np.ones(sphere2.n_vertices))
    assert abs(q / (-16 * np.pi / np.e) - 1) < 0.01


def test_sphere_lowest_eigenvalue(sphere2):
    lam, _ = stability.min_rayleigh(sphere2, 10)
    # constants: L 1 = (|A|^2 + 1/2) = 1 on the radius-2 sphere
    assert abs(lam + 1) < 5e-3


def test_witness_on_sphere(sphere2):
    w = stability.instability_witness(sphere2, 10)
    assert w.q < 0


def test_small_ball_on_plane_is_stable():
    pp = primitives.plane_grid(0.2, 81)
    with pytest.raises(stability.NoWitnessError):
        stability.instability_witness(pp, 0.1)


def test_cutoff_energy_decreases_with_delta():
    e = [stability.radial_cutoff_energy(d, 0.1) for d in (1e-3, 1e-6, 1e-9)]
    assert e[0] > e[1] > e[2] > stability.radial_cutoff_energy(0.0, 0.1)


def test_mesh_cutoff_matches_radial():
    exact = stability.radial_cutoff_energy(0.05, 0.3)
    errs = [abs(stability.log_cutoff(primitives.plane_grid(1, n), [[0, 0, 0]], 0.05, 0.3).energy
                / exact - 1) for n in (81, 161)]
    assert errs[1] < errs[0] and errs[1] < 0.1

import numpy as np

from mcflab import shrinker
from mcflab.mesh import primitives


def test_f_of_plane_and_sphere(sphere2):
    assert abs(shrinker.f_functional(primitives.plane_grid(8, 161)) - 1) < 5e-3
    assert abs(shrinker.f_functional(sphere2) / (4 / np.e) - 1) < 5e-3


def test_residual_small_on_shrinker(sphere2):
    l2, sup = shrinker.shrinker_residual(sphere2)
    assert sup < 1e-3


def test_entropy_argmax_tracks_translation():
    shift = np.array([0.3, -0.2, 0.1])
    m = primitives.icosphere(3, 1.0)
    m = m.with_vertices(m.vertices + shift)
    lam, (x, t) = shrinker.entropy_estimate(m, return_argmax=True)
    assert np.abs(x - shift).max() <= 2.0 / 4 / 8
    assert abs(lam / (4 / np.e) - 1) < 0.01


def test_classify(sphere2):
    assert shrinker.classify_flat(sphere2) == "sphere-like"
    assert shrinker.classify_flat(primitives.plane_grid(8, 81)) == "plane-like"

import numpy as np
import pytest

from mcflab import sheets
from mcflab.mesh import primitives


def test_two_sheets_over_plane():
    ref = primitives.plane_grid(1, 41)
    two = primitives.merge(primitives.plane_grid(1.2, 45, -0.03), primitives.plane_grid(1.2, 45, 0.03))
    b = sheets.decompose_sheets(two, ref, 0.1, 0.9)
    assert b.m == 2
    u, _ = sheets.height_difference(b, int(np.flatnonzero(b.mask)[0]))
    assert np.nanmax(np.abs(u - 0.06)) < 1e-12


def test_multiplicity():
    dp = primitives.merge(primitives.plane_grid(1.2, 45, -0.001), primitives.plane_grid(1.2, 45, 0.001))
    assert sheets.multiplicity_at(dp, [0, 0, 0], [0.4, 0.2, 0.1]).m == 2
    assert sheets.multiplicity_at(primitives.plane_grid(1.2, 45), [0, 0, 0], [0.1]).m == 1


def test_offset_graph_curvature(sphere2):
    z = np.zeros(sphere2.n_vertices)
    for s in (0.1, 0.2):
        H = sheets.mean_curvature_of_graph(sphere2, z + s)
        assert np.abs(H / (2 / (2 + s)) - 1).max() < 0.03
        _, nu, _ = sheets.graph_quantities(sphere2, z + s)
        # det of the offset map on a radius-2 sphere
        assert np.allclose(nu, (1 + s / 2) ** 2, rtol=1e-3)


def test_exact_linear_solution():
    ref = primitives.plane_grid(1, 41)
    tk = 0.01 * np.arange(5)
    frames = 1e-3 * np.exp(tk / 2)[:, None] * np.ones(ref.n_vertices)
    assert sheets.linearized_residual(ref, frames, -frames, 0.01).ratio < 1e-4


def test_projection_bound():
    ref = primitives.plane_grid(1, 41)
    x = ref.vertices
    u1 = 0.02 + 0.01 * x[:, 0] ** 2
    u2 = -0.02 + 0.0 * x[:, 0]
    res = sheets.projection_bound_check(ref, u1, u2, sample_count=200)
    assert res.ok and res.worst <= 2


def test_projection_rejects_steep_graphs():
    ref = primitives.plane_grid(1, 41)
    with pytest.raises(sheets.SheetError):
        sheets.projection_bound_check(ref, ref.vertices[:, 0], 0 * ref.vertices[:, 0])

import numpy as np
import pytest

from mcflab.decomposition import (HIGH, BallDecomposition, DecompositionError, decompose,
                                  f_of_t, select_times, window_property_holds)
from mcflab.mesh import primitives


def test_single_plane_has_no_thin_part():
    d = decompose(primitives.plane_grid(1.3, 53), 0.1, 1.0, 72)
    assert d.thin_volume == 0
    assert d.thick_volume > 0.9 * (4 / 3 * np.pi - d.near_volume)


def test_close_planes_are_thin():
    two = primitives.merge(primitives.plane_grid(0.7, 36, -0.025), primitives.plane_grid(0.7, 36, 0.025))
    exact = 0.05 * np.pi * 0.25
    errs = [abs(decompose(two, 0.2, 0.5, r).thin_volume / exact - 1) for r in (96, 128)]
    assert errs[1] < errs[0] and errs[1] < 0.1


def test_tiny_sphere_is_high_curvature(tmp_path):
    d = decompose(primitives.icosphere(3, 0.01), 0.1, 0.5, 64)
    assert d.labels[32, 32, 32] == HIGH
    d.write(str(tmp_path / "g.rle"), str(tmp_path / "g.json"))
    assert np.array_equal(BallDecomposition.read_labels(str(tmp_path / "g.rle")), d.labels)


def test_coarse_grid_rejected():
    with pytest.raises(DecompositionError):
        decompose(primitives.plane_grid(1.3, 53), 0.1, 1.0, 32)


def test_f_of_t_window_infimum():
    t = np.linspace(0, 1, 101)
    assert f_of_t(t, t, 1.0, 0.5) == pytest.approx(0.5)


def test_select_times_plain_decay():
    t = np.linspace(0, 10, 1001)
    sel = select_times(np.exp(-t), 0, 1, 3, times=t)
    assert sel.complete and len(sel.times) == 3
    assert sel.times[0] > 1.0


def test_select_times_skips_spikes(rng):
    t = np.linspace(0, 40, 4001)
    f = np.exp(-0.1 * t)
    f[rng.choice(len(t), 30, replace=False)] *= 5
    sel = select_times(f, 0, 1, 6, times=t)
    assert sel.times and window_property_holds(t, f, sel.times, 1)


def test_select_times_zero_function():
    t = np.linspace(0, 10, 101)
    sel = select_times(0 * t, 0, 1, 2, times=t)
    assert not sel.complete and sel.times == []

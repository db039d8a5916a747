import json
from fractions import Fraction

import numpy as np
import pytest

from mcflab import harnack


def test_bound_monotone_in_parameters():
    base = harnack.liyau_bound(2.0, 0.25, 0.0, 1.0, 1.0, 2, 0.1, 0.3, 0.0)
    assert harnack.liyau_bound(2.0, 0.25, 1.0, 1.0, 1.0, 2, 0.1, 0.3, 0.0) > base
    assert harnack.liyau_bound(2.0, 0.25, 0.0, 2.0, 1.0, 2, 0.1, 0.3, 0.0) > base
    assert harnack.liyau_bound(2.0, 0.25, 0.0, 1.0, 2.0, 2, 0.1, 0.3, 0.0) > base


def test_heat_only_bound_is_li_yau():
    b = harnack.liyau_bound(1.0 + 1e-12, np.inf, 0.0, 0.0, 0.0, 2, 1.0, 2.0, 0.25, C=0.0)
    assert b == pytest.approx(2.0 * np.exp(0.25))


def test_torus_solution_is_exact():
    rng = np.random.default_rng(1)
    u0, q = harnack.random_torus_case(rng)
    sol = harnack.TorusSolution(u0, q)
    assert sol.residual(0.1) < 1e-8


def test_random_cases_pass():
    for sol, mask, t1, t2 in harnack.random_cases(3, 10):
        rep = harnack.harnack_scan(sol, mask, t1, t2, chain_nodes=2)
        assert rep.passed
    for sol, mask, t1, t2 in harnack.random_sphere_cases(3, 5):
        assert harnack.harnack_scan(sol, mask, t1, t2).passed


def test_calibration_constant_recorded():
    assert harnack.calibrate_liyau_constant(count=20) <= harnack.LIYAU_C
    assert harnack.LIYAU_CALIBRATION["required"] <= harnack.LIYAU_C


def test_positivity_required():
    sol = harnack.TorusSolution(-np.ones((16, 16)))
    with pytest.raises(harnack.PositivityError):
        harnack.harnack_scan(sol, np.ones((16, 16), bool), 0.1, 0.2)


def test_ks_chain_n9(tmp_path):
    c = harnack.ks_chain([1.0, 0.0], [0.0, 0.0], 1, 2, 0.5, l=1)
    assert c.N == 9 and c.R == Fraction(2, 9) and c.theta == Fraction(13, 4)
    assert all(c.check(1, 1, 0.5).values())
    c.to_csv(tmp_path / "chain.csv")
    assert len((tmp_path / "chain.csv").read_text().splitlines()) == 11


def test_ks_chain_same_point():
    c = harnack.ks_chain([0.0, 0.0], [0.0, 0.0], 1, 2, 0.5)
    assert c.N == 3 and c.R == 0


def test_ks_chain_clearance():
    with pytest.raises(harnack.ClearanceError):
        harnack.ks_chain([1.0, 0.0], [0.0, 0.0], 1, 2, 0.5, clearance=lambda p: 0.1)


def test_report_json(tmp_path):
    sol, mask, t1, t2 = next(harnack.random_cases(0, 1))
    rep = harnack.harnack_scan(sol, mask, t1, t2)
    rep.to_json(tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["quotient"] == rep.quotient

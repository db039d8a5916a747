import numpy as np
import pytest
from scipy.special import exp1

from mcflab.kernel import (Cutoffs, HeatKernelModel, LipschitzError, MeasureSamples,
                           ParametrixDomainError, QuadratureError, ResolutionError,
                           SandwichError, SingularCurve, TruncationError,
                           annulus_integrals, backward_v, domination_check, i_functional,
                           measure_recovery, parametrix_eval, richardson_log,
                           singular_potential_U, smooth_step, spectral_kernel,
                           sphere_u0, sphere_u1, step_primitive)

PLANE = HeatKernelModel("plane")
SPHERE = HeatKernelModel("sphere")
NORTH = np.array([0.0, 0.0, 1.0])


def _phi(x, t):
    return np.log(1 / np.linalg.norm(x, axis=1)) / (2 * np.pi)


def test_sphere_kernel_has_unit_mass():
    nt, wt = np.polynomial.legendre.leggauss(200)
    ph = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    C, P = np.meshgrid(nt, ph, indexing="ij")
    S = np.sqrt(1 - C ** 2)
    Z = np.stack([S * np.cos(P), S * np.sin(P), C], -1)
    mass = np.sum(wt[:, None] * spectral_kernel(SPHERE, NORTH, Z, 0.05)) * 2 * np.pi / 400
    assert abs(mass - 1) < 1e-10


def test_torus_kernel_branches_agree():
    tm = HeatKernelModel("torus", periods=(1.0, 2.0))
    # image sum below 0.1, Fourier series above
    a = tm.kernel([0, 0], [[0.3, 0.2]], 0.1 - 1e-12)
    b = tm.kernel([0, 0], [[0.3, 0.2]], 0.1 + 1e-12)
    assert abs(a - b) < 1e-10
    assert abs(tm.kernel([0, 0], [[0.3, 0.2]], 50.0) - 0.5) < 1e-12


def test_truncation_error():
    small = HeatKernelModel("sphere", max_degree=50)
    with pytest.raises(TruncationError):
        spectral_kernel(small, NORTH, NORTH, 1e-4)


def test_parametrix_order_two_convergence():
    d = np.linspace(0, 0.5, 101)
    y = np.stack([np.sin(d), 0 * d, np.cos(d)], 1)
    errs = [np.abs(spectral_kernel(SPHERE, NORTH, y, t) - parametrix_eval(SPHERE, NORTH, y, t, 1)[0]).max()
            for t in (0.04, 0.02, 0.01, 0.005)]
    ratios = np.array(errs[1:]) / errs[:-1]
    assert np.all((ratios > 0.49) & (ratios < 0.51))


def test_transport_coefficients():
    d = np.array([1e-4, 0.3, 1.0])
    assert np.allclose(sphere_u0(d), np.sqrt(d / np.sin(d)), rtol=1e-14)
    assert abs(sphere_u1(np.array([0.0]))[0] - 1 / 3) < 1e-12


def test_parametrix_domain():
    with pytest.raises(ParametrixDomainError):
        parametrix_eval(SPHERE, NORTH, -NORTH, 0.1)


def test_static_potential_matches_exponential_integral():
    c = SingularCurve.static([0, 0.0], -5, 5)
    nu = MeasureSamples.lebesgue(-5, 5)
    r = np.geomspace(1e-6, 2, 40)
    x = np.stack([r, 0 * r], 1)
    U = singular_potential_U(PLANE, c, nu, x, 1.0, 0.0)
    assert np.allclose(U, exp1(r * r / 4) / (4 * np.pi), rtol=1e-10)
    assert np.isinf(singular_potential_U(PLANE, c, nu, [0.0, 0.0], 1.0, 0.0))


def test_log_profile_ratio_frozen():
    c = SingularCurve.static([0, 0.0], -5, 5)
    U = singular_potential_U(PLANE, c, MeasureSamples.lebesgue(-5, 5), [1e-3, 0], 1.0, 0.0)
    assert U * 2 * np.pi / np.log(1e3) == pytest.approx(1.0585631, rel=1e-6)


def test_quadrature_error_when_underresolved():
    c = SingularCurve.static([0, 0.0], -5, 5)
    with pytest.raises(QuadratureError):
        singular_potential_U(PLANE, c, MeasureSamples.lebesgue(-5, 5), [[1e-3, 0]], 1.0, 0.0,
                             n_nodes=2, levels=2, chunks=1)


def test_curve_validation(tmp_path):
    with pytest.raises(LipschitzError):
        SingularCurve([0, 1], [[0, 0], [2, 0]], sigma=1.0)
    c = SingularCurve([0, 1, 2], [[0, 0], [1, 0], [1, 1]])
    assert c.sigma == 1.0 and c.check_lipschitz(0, 2)
    c.to_csv(tmp_path / "c.csv")
    assert np.array_equal(SingularCurve.from_csv(tmp_path / "c.csv").positions, c.positions)
    assert np.allclose(c.position(5.0), [1, 1])


def test_measure_samples():
    nu = MeasureSamples([0, 1, 3], [2.0, 0.5])
    assert nu.mass() == 3.0 and nu.mass(0.5, 2) == 1.5
    assert nu.density(-1) == 0 and nu.density(2) == 0.5


def test_backward_v_sandwich():
    c = SingularCurve.static([0, 0.0], -5, 5)
    bv = backward_v(PLANE, c, (0, 1), 0.75)
    assert bv.scale == pytest.approx(5.40, abs=0.01)
    assert bv.lower_margin > 0 and bv.upper_margin >= 0
    x = np.array([[1e-2, 0.0]])
    V = bv.V(x, 0.5)[0]
    assert 1e-4 <= V <= 1e-2 ** 1.5
    with pytest.raises(SandwichError) as err:
        backward_v(PLANE, c, (0, 1), 0.95)
    assert err.value.admissible_radius >= 0


def test_cutoffs():
    cut = Cutoffs(1e-3, 0.5, 0.4, 0.6, 0.2, 0.8)
    t = np.linspace(0, 1, 2001)
    z = cut.zeta(t)
    assert np.all(z[(t >= 0.4) & (t <= 0.6)] == 1e-3)
    assert np.allclose(z[(t <= 0.2) | (t >= 0.8)], 0.5, rtol=1e-15)
    assert np.abs(cut.zeta_derivative(t)).max() <= cut.zeta_slope_bound()
    zz = np.linspace(0, 3, 301)
    assert np.allclose(step_primitive(zz[zz >= 1]), zz[zz >= 1] - 0.5)
    assert np.all(np.diff(smooth_step(zz)) >= 0)


def test_annulus_integrals_for_log_potential():
    c = SingularCurve.static([0, 0.0], -5, 5)
    for d in (1e-2, 1e-4):
        J1, J2 = annulus_integrals(PLANE, c, _phi, d, 0.5, 0, 1)
        assert J1 == pytest.approx(0.5 - d, rel=1e-8)
    with pytest.raises(ResolutionError):
        annulus_integrals(PLANE, c, _phi, 1e-2, 0.5, 0, 1, n_radial=4)


def test_i_functional_bounded():
    c = SingularCurve.static([0, 0.0], -5, 5)
    vals = [i_functional(PLANE, [c], _phi, rho, 0.5, 0, 1, gamma=0.75) for rho in (1e-1, 1e-2, 1e-3)]
    assert vals[0] < vals[1] < vals[2] < 0.5


def test_richardson_exact_for_polynomial():
    rhos = np.array([1e-2, 1e-4, 1e-8])
    x = 1 / np.abs(np.log(rhos))
    assert richardson_log(rhos, 2 + 3 * x - x * x)[-1] == pytest.approx(2, abs=1e-10)


def test_smooth_field_recovers_zero():
    c = SingularCurve.static([0, 0.0], -5, 5)

    def psi(t):
        return float(smooth_step((t - 0.3) / 0.1) * smooth_step((1.9 - t) / 0.1))

    res = measure_recovery(PLANE, [c], lambda x, t: 1 + np.sum(x * x, 1), [1e-4, 1e-8, 1e-16],
                           psi, (0.3, 1.9), time_breaks=[0.4, 1.8], n_angle=4)
    assert abs(res.value) < 1e-6


def test_domination_check():
    assert domination_check([1.0, 1.0], [[0.5, 0.5]], 0.75).ok
    assert not domination_check([0.1, 1.0], [[0.5, 0.5]], 0.75).ok

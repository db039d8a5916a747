"""Heat kernels on model surfaces: exact oracles and the short-time parametrix."""

from dataclasses import dataclass, field

import numpy as np

_GL16 = np.polynomial.legendre.leggauss(16)


class TruncationError(ValueError):
    """The requested time is too small for the configured spectral truncation."""


class ParametrixDomainError(ValueError):
    """The points are farther apart than the parametrix radius allows."""


@dataclass
class HeatKernelModel:
    """Heat kernel data for a model surface.

    Parameters
    ----------
    surface : {"plane", "torus", "sphere"}
        Flat plane, flat torus with the given ``periods`` or the unit sphere.
    periods : tuple of float
        Side lengths of the torus.
    max_degree : int
        Largest Legendre degree used by the sphere series.
    rho0 : float
        Harmonic radius; the parametrix is evaluated only for ``d < rho0 / 2``.
    """

    surface: str = "plane"
    periods: tuple = (1.0, 1.0)
    max_degree: int = 4000
    rho0: float = field(default=float("nan"))

    def __post_init__(self):
        if self.surface not in ("plane", "torus", "sphere"):
            raise ValueError("unknown surface %r" % (self.surface,))
        if self.surface == "sphere" and self.max_degree < 8:
            raise ValueError("spectral truncation must be at least 8")
        if np.isnan(self.rho0):
            self.rho0 = {"plane": np.inf, "torus": min(self.periods),
                         "sphere": np.pi}[self.surface]
        if not self.rho0 > 0:
            raise ValueError("rho0 must be positive")

    @property
    def dim(self):
        return 3 if self.surface == "sphere" else 2

    @property
    def area(self):
        if self.surface == "torus":
            return float(self.periods[0] * self.periods[1])
        if self.surface == "sphere":
            return 4 * np.pi
        return np.inf

    def displacement(self, x, y):
        """Shortest displacement ``x - y`` on flat models."""
        d = np.asarray(x, float) - np.asarray(y, float)
        if self.surface == "torus":
            p = np.asarray(self.periods, float)
            d = d - p * np.round(d / p)
        return d

    def distance(self, x, y):
        """Geodesic distance, broadcasting over leading axes."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if self.surface == "sphere":
            c = np.linalg.norm(np.cross(x, y), axis=-1)
            return np.arctan2(c, np.sum(x * y, axis=-1))
        return np.linalg.norm(self.displacement(x, y), axis=-1)

    def kernel(self, x, y, t):
        """Exact heat kernel ``p(x, y, t)``."""
        if self.surface == "plane":
            d2 = np.sum((np.asarray(x, float) - np.asarray(y, float)) ** 2, axis=-1)
            return np.exp(-d2 / (4 * t)) / (4 * np.pi * t)
        return spectral_kernel(self, x, y, t)


def gaussian_p0(d, t, m=2):
    """Euclidean heat kernel ``(4 pi t)^{-m/2} exp(-d^2 / 4t)``."""
    return (4 * np.pi * t) ** (-m / 2) * np.exp(-np.asarray(d) ** 2 / (4 * t))


def sphere_degree(t, tol=1e-14):
    """Smallest ``L >= 8`` with ``(2L + 3) exp(-L(L + 1) t) < tol``."""
    L = 8.0
    for _ in range(3):
        c = np.log((2 * L + 3) / tol)
        L = max(8.0, np.floor(0.5 * (np.sqrt(1 + 4 * c / t) - 1)))
    L = int(L)
    while (2 * L + 3) * np.exp(-L * (L + 1) * t) >= tol:
        L += 1
    while L > 8 and (2 * L + 1) * np.exp(-(L - 1) * L * t) < tol:
        L -= 1
    return L


def _sphere_series(cosd, t, L):
    cosd = np.clip(np.asarray(cosd, float), -1.0, 1.0)
    p_prev = np.ones_like(cosd)
    total = p_prev / (4 * np.pi)
    if L == 0:
        return total
    p = cosd.copy()
    total = total + 3 / (4 * np.pi) * np.exp(-2 * t) * p
    for l in range(1, L):
        p_prev, p = p, ((2 * l + 1) * cosd * p - l * p_prev) / (l + 1)
        n = l + 1
        total = total + (2 * n + 1) / (4 * np.pi) * np.exp(-n * (n + 1) * t) * p
    return total


def _torus_kernel(disp, t, periods, tol=1e-16):
    """Flat torus kernel; ``t`` may be an array broadcasting against ``disp``."""
    a, b = periods
    disp = np.asarray(disp, float)
    dx, dy, t = np.broadcast_arrays(disp[..., 0], disp[..., 1], np.asarray(t, float))
    out = np.empty(dx.shape)
    short = t <= 0.1 * min(a, b) ** 2
    if np.any(short):
        x, y, s = dx[short], dy[short], t[short]
        reach = np.sqrt(4 * s.max() * np.log(1 / tol))
        ma = int(np.ceil(reach / a)) + 1
        mb = int(np.ceil(reach / b)) + 1
        gx = sum(np.exp(-(x + i * a) ** 2 / (4 * s)) for i in range(-ma, ma + 1))
        gy = sum(np.exp(-(y + j * b) ** 2 / (4 * s)) for j in range(-mb, mb + 1))
        out[short] = gx * gy / (4 * np.pi * s)
    if not np.all(short):
        x, y, s = dx[~short], dy[~short], t[~short]
        k = np.sqrt(np.log(1 / tol) / s.min()) / (2 * np.pi)
        na = int(np.ceil(a * k)) + 1
        nb = int(np.ceil(b * k)) + 1
        fx = sum((1 if i == 0 else 2) * np.exp(-4 * np.pi ** 2 * s * i * i / a ** 2)
                 * np.cos(2 * np.pi * i * x / a) for i in range(na + 1))
        fy = sum((1 if j == 0 else 2) * np.exp(-4 * np.pi ** 2 * s * j * j / b ** 2)
                 * np.cos(2 * np.pi * j * y / b) for j in range(nb + 1))
        out[~short] = fx * fy / (a * b)
    return out


def spectral_kernel(model, x, y, t, degree=None):
    """Heat kernel of the unit sphere or flat torus by its eigenfunction series.

    On the sphere the Legendre series is truncated at the smallest degree whose
    tail bound is below 1e-14, unless ``degree`` is given. The torus uses the
    image sum for short times and the Fourier series otherwise.

    Raises
    ------
    TruncationError
        If the sphere series would need more than ``model.max_degree`` terms.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if model.surface == "torus":
        return _torus_kernel(model.displacement(x, y), t, model.periods)
    if model.surface != "sphere":
        raise ValueError("spectral kernel needs a sphere or torus model")
    L = sphere_degree(t) if degree is None else int(degree)
    if L > model.max_degree:
        raise TruncationError(
            "t = %g needs degree %d > max_degree %d" % (t, L, model.max_degree))
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    cosd = np.sum(x * y, axis=-1) / (
        np.linalg.norm(x, axis=-1) * np.linalg.norm(y, axis=-1))
    return _sphere_series(cosd, t, L)


def _sphere_g(r):
    """``g = log u0`` and its first two radial derivatives on the unit sphere."""
    r = np.asarray(r, float)
    small = r < 1e-3
    rs = np.where(small, 1.0, r)
    g = 0.5 * (np.log(rs) - np.log(np.sin(rs)))
    g1 = 0.5 * (1 / rs - 1 / np.tan(rs))
    g2 = 0.5 * (-1 / rs ** 2 + 1 / np.sin(rs) ** 2)
    r2 = r * r
    g = np.where(small, r2 / 12 + r2 * r2 / 360, g)
    g1 = np.where(small, 0.5 * (r / 3 + r * r2 / 45), g1)
    g2 = np.where(small, 0.5 * (1 / 3 + r2 / 15), g2)
    return g, g1, g2


def sphere_u0(d):
    """Leading transport coefficient ``(d / sin d)^{1/2}`` on the unit sphere."""
    return np.exp(_sphere_g(d)[0])


def _sphere_lap_u0(r):
    g, g1, g2 = _sphere_g(r)
    r = np.asarray(r, float)
    # cot r * g' is regular at 0: g' ~ r/6
    cot_g1 = np.where(r < 1e-3, 1 / 6 + r * r * (1 / 90 - 1 / 18),
                      g1 / np.tan(np.where(r < 1e-3, 1.0, r)))
    return np.exp(g) * (g2 + g1 ** 2 + cot_g1)


def sphere_u1(d):
    """Second transport coefficient on the unit sphere.

    Integrates ``u1(r) = u0(r) / r * int_0^r (Delta u0 / u0)(s) ds`` with
    16-point Gauss-Legendre quadrature along the geodesic.
    """
    d = np.atleast_1d(np.asarray(d, float))
    nodes, weights = _GL16
    s = 0.5 * (nodes[None, :] + 1) * d[:, None]
    w = 0.5 * weights[None, :] * d[:, None]
    integrand = _sphere_lap_u0(s) / sphere_u0(s)
    mean = np.sum(w * integrand, axis=1) / np.where(d > 0, d, 1.0)
    mean = np.where(d > 0, mean, _sphere_lap_u0(np.zeros(1))[0])
    return sphere_u0(d) * mean


def parametrix_eval(model, x, y, t, k=1):
    """Truncated parametrix ``p0 (u0 + t u1)`` of order ``k``.

    Returns
    -------
    value : ndarray
        Parametrix value.
    u0 : ndarray
        Leading coefficient at ``(x, y)``.
    error_budget : float
        Scale ``t^{k + 1 - m/2}`` of the remainder; multiply by the surface
        constant to get an error bound.
    """
    if k not in (0, 1):
        raise ValueError("parametrix order must be 0 or 1")
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    d = np.asarray(model.distance(x, y), float)
    if np.any(d >= model.rho0 / 2):
        raise ParametrixDomainError(
            "distance %.4g exceeds rho0/2 = %.4g" % (np.max(d), model.rho0 / 2))
    if model.surface == "sphere":
        u0 = sphere_u0(d)
        series = u0 + (t * sphere_u1(d).reshape(d.shape) if k == 1 else 0.0)
    else:
        u0 = np.ones_like(d)
        series = u0
    return gaussian_p0(d, t) * series, u0, t ** (k + 1 - 1)

"""Harnack-inequality harnesses: the explicit Li-Yau bound, chained
comparisons on exact torus solutions and the Krylov-Safonov chain."""

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

# Calibrated on exact flat-torus solutions with potentials; see
# ``calibrate_liyau_constant`` and the seed recorded alongside.
LIYAU_C = 0.1
LIYAU_CALIBRATION = {"seed": 0, "cases": 200, "alphas": [1.25, 1.5, 2.0, 3.0],
                     "required": 0.0, "safety_floor": 0.1}


class HarnackDomainError(ValueError):
    """Parameters outside the domain of the Harnack inequality."""


class PositivityError(ValueError):
    """The solution is not positive where the inequality is applied."""


class ResidualError(ValueError):
    """The supplied field does not solve the equation to tolerance."""


class ClearanceError(ValueError):
    """The segment comes closer to the boundary than allowed."""


def liyau_A(alpha, R, K=0.0, theta=0.0, gamma=0.0, C=None):
    """Constant ``A`` in the exponent of the Li-Yau bound."""
    C = LIYAU_C if C is None else C
    if not alpha > 1:
        raise HarnackDomainError("alpha must exceed 1")
    if not R > 0 or K < 0 or theta < 0 or gamma < 0:
        raise HarnackDomainError("need R > 0 and K, theta, gamma >= 0")
    return C * (alpha * math.sqrt(K) / R
                + alpha ** 3 / ((alpha - 1) * R ** 2)
                + gamma ** (2 / 3) * (alpha - 1) ** (1 / 3) * alpha ** (-1 / 3)
                + math.sqrt(alpha * theta)
                + alpha * K / (alpha - 1))


def path_action(alpha, t1, t2, length=None, path=None, q=None, n_quad=32):
    """``alpha/(4 dt) int |gamma'|^2 + dt int q(gamma(s), (1-s) t2 + s t1) ds``.

    Either ``length`` of a constant-speed path or ``path``, a callable
    ``s -> point`` on ``[0, 1]`` from ``y`` (at ``t2``) to ``x`` (at ``t1``).
    """
    dt = t2 - t1
    if not dt > 0:
        raise HarnackDomainError("need t2 > t1")
    s, w = np.polynomial.legendre.leggauss(n_quad)
    s, w = 0.5 * (s + 1), 0.5 * w
    if path is not None:
        pts = np.array([path(v) for v in s])
        h = 1e-6
        vel = np.array([(np.asarray(path(min(v + h, 1.0))) - np.asarray(path(max(v - h, 0.0))))
                        / (min(v + h, 1.0) - max(v - h, 0.0)) for v in s])
        kinetic = float(np.sum(w * np.sum(vel ** 2, axis=1)))
    else:
        pts = None
        kinetic = float(length) ** 2
    action = alpha * kinetic / (4 * dt)
    if q is not None:
        if pts is None:
            raise ValueError("a potential needs an explicit path")
        times = (1 - s) * t2 + s * t1
        action += dt * float(np.sum(w * np.array([q(p, tt) for p, tt in zip(pts, times)])))
    return action


def liyau_bound(alpha, R, K, theta, gamma, n, t1, t2, rho, C=None):
    """``(t2/t1)^{n alpha / 2} exp(A (t2 - t1) + rho)``."""
    if not 0 < t1 < t2:
        raise HarnackDomainError("need 0 < t1 < t2")
    A = liyau_A(alpha, R, K, theta, gamma, C)
    return (t2 / t1) ** (n * alpha / 2) * math.exp(A * (t2 - t1) + rho)


@dataclass
class HarnackReport:
    quotient: float
    bound: float
    params: dict
    chain: list = field(default_factory=list)

    @property
    def margin(self):
        return self.bound / self.quotient

    @property
    def passed(self):
        return bool(self.quotient <= self.bound * (1 + 1e-6))

    def to_dict(self):
        d = asdict(self)
        d.update(margin=self.margin, passed=self.passed, schema_version=1)
        return d

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


class TorusSolution:
    """Exact semi-discrete solution of ``u_t = Delta u - q u`` on a flat torus.

    The Laplacian is spectral on an ``n x n`` grid and time evolution uses the
    eigendecomposition of the symmetric operator, so ``u(t)`` is exact for the
    discretized equation at every ``t``.
    """

    def __init__(self, u0, q=None, period=1.0):
        u0 = np.asarray(u0, float)
        self.n = u0.shape[0]
        self.period = float(period)
        self.q = np.zeros_like(u0) if q is None else np.asarray(q, float)
        k = 2 * np.pi * np.fft.fftfreq(self.n, d=self.period / self.n)
        D2 = np.real(np.fft.ifft(-(k ** 2)[:, None] * np.fft.fft(np.eye(self.n), axis=0), axis=0))
        eye = np.eye(self.n)
        lap = np.kron(D2, eye) + np.kron(eye, D2)
        L = lap - np.diag(self.q.ravel())
        L = 0.5 * (L + L.T)
        self.evals, self.evecs = np.linalg.eigh(L)
        self.coef = self.evecs.T @ u0.ravel()
        self.operator = L

    @property
    def grid(self):
        x = np.arange(self.n) * self.period / self.n
        return np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)

    def __call__(self, t):
        return (self.evecs @ (np.exp(self.evals * t) * self.coef)).reshape(self.n, self.n)

    def residual(self, t, h=None):
        """Residual of a fourth-order time difference against ``L u``, relative
        to ``|L u| + |u|``."""
        if h is None:
            h = 1e-2 / np.abs(self.evals).max()
        dudt = (8 * (self(t + h) - self(t - h)) - (self(t + 2 * h) - self(t - 2 * h))
                ).ravel() / (12 * h)
        u = self(t).ravel()
        lu = self.operator @ u
        return float(np.linalg.norm(dudt - lu) / (np.linalg.norm(lu) + np.linalg.norm(u)))

    def potential_bounds(self):
        """``(theta, gamma)`` bounds on ``Delta q`` and ``|grad q|``."""
        k = 2 * np.pi * np.fft.fftfreq(self.n, d=self.period / self.n)
        qh = np.fft.fft2(self.q)
        lap = np.real(np.fft.ifft2(-(k[:, None] ** 2 + k[None, :] ** 2) * qh))
        gx = np.real(np.fft.ifft2(1j * k[:, None] * qh))
        gy = np.real(np.fft.ifft2(1j * k[None, :] * qh))
        return max(float(lap.max()), 0.0), float(np.sqrt(gx ** 2 + gy ** 2).max())


def _torus_displacement(a, b, period):
    d = np.asarray(a, float) - np.asarray(b, float)
    return d - period * np.round(d / period)


def _torus_points(self):
    return self.grid.reshape(-1, 2)


def _torus_geodesic(self, y, x, s):
    """Points ``y + s (x - y)`` along the shortest torus segment."""
    d = _torus_displacement(x, y, self.period)
    return (np.asarray(y, float) + np.asarray(s)[:, None] * d) % self.period


def _torus_q(self, pts):
    idx = np.round(np.asarray(pts) / self.period * self.n).astype(int) % self.n
    return self.q[idx[:, 0], idx[:, 1]]


TorusSolution.points = property(_torus_points)
TorusSolution.geodesic = _torus_geodesic
TorusSolution.distance = lambda self, x, y: float(
    np.linalg.norm(_torus_displacement(x, y, self.period)))
TorusSolution.q_at = _torus_q
TorusSolution.values = lambda self, t: self(t).ravel()
TorusSolution.ricci_lower = 0.0
TorusSolution.default_R = property(lambda self: self.period / 4)


class SphereSolution:
    """Zonal solution ``u = c + p(x, x0, t + t0)`` of the heat equation on the
    unit sphere, evaluated on a latitude-longitude point set."""

    def __init__(self, x0, t0=0.05, constant=0.0, n_lat=24, n_lon=48):
        self.x0 = np.asarray(x0, float) / np.linalg.norm(x0)
        self.t0 = float(t0)
        self.constant = float(constant)
        lat = np.pi * (np.arange(n_lat) + 0.5) / n_lat
        lon = 2 * np.pi * np.arange(n_lon) / n_lon
        LA, LO = np.meshgrid(lat, lon, indexing="ij")
        self.points = np.stack([np.sin(LA) * np.cos(LO), np.sin(LA) * np.sin(LO),
                                np.cos(LA)], -1).reshape(-1, 3)
        self.q = np.zeros(len(self.points))
        self.ricci_lower = 0.0
        self.default_R = np.pi / 2

    def _series(self, t, deriv=False):
        from .kernel.models import sphere_degree
        L = sphere_degree(t + self.t0)
        c = np.clip(self.points @ self.x0, -1, 1)
        p_prev, p = np.ones_like(c), c
        tot = np.zeros_like(c)
        for l in range(L + 1):
            pl = p_prev if l == 0 else p
            fac = -l * (l + 1) if deriv else 1.0
            tot += fac * (2 * l + 1) / (4 * np.pi) * np.exp(-l * (l + 1) * (t + self.t0)) * pl
            if l >= 1:
                p_prev, p = p, ((2 * l + 1) * c * p - l * p_prev) / (l + 1)
        return tot

    def values(self, t):
        return self.constant + self._series(t)

    def residual(self, t, h=1e-5):
        """Relative residual of a fourth-order time difference against ``Delta u``."""
        dudt = (8 * (self.values(t + h) - self.values(t - h))
                - (self.values(t + 2 * h) - self.values(t - 2 * h))) / (12 * h)
        lap = self._series(t, deriv=True)
        scale = np.linalg.norm(lap) + np.linalg.norm(self.values(t))
        return float(np.linalg.norm(dudt - lap) / scale)

    def potential_bounds(self):
        return 0.0, 0.0

    def distance(self, x, y):
        return float(np.arctan2(np.linalg.norm(np.cross(x, y)), np.dot(x, y)))

    def geodesic(self, y, x, s):
        y, x = np.asarray(y, float), np.asarray(x, float)
        ang = self.distance(x, y)
        s = np.asarray(s, float)
        if ang < 1e-14:
            return np.repeat(y[None, :], len(s), axis=0)
        return (np.sin((1 - s) * ang)[:, None] * y + np.sin(s * ang)[:, None] * x) / np.sin(ang)

    def q_at(self, pts):
        return np.zeros(len(pts))


def _segment_bound(sol, x, y, t1, t2, alpha, R, theta, gamma, C):
    """Li-Yau bound for ``u(x, t1) <= B u(y, t2)`` along the geodesic from y to x."""
    length = sol.distance(x, y)
    rho = alpha * length ** 2 / (4 * (t2 - t1))
    if np.any(sol.q):
        s, w = np.polynomial.legendre.leggauss(16)
        s = 0.5 * (s + 1)
        qv = sol.q_at(sol.geodesic(y, x, s))
        rho += (t2 - t1) * float(np.sum(0.5 * w * qv))
    return liyau_bound(alpha, R, sol.ricci_lower, theta, gamma, 2, t1, t2, rho, C)


def harnack_scan(sol, omega_mask, t1, t2, alpha=2.0, R=None, chain_nodes=1,
                 C=None, residual_tol=1e-6):
    """Compare ``sup_{Omega'} u(., t1) / inf_{Omega'} u(., t2)`` with Li-Yau.

    ``sol`` is a :class:`TorusSolution` or :class:`SphereSolution` and
    ``omega_mask`` selects its points in ``Omega'``. The extreme points are
    joined by a geodesic chain of ``chain_nodes`` segments with equal time
    steps; the bound is the product of segment bounds. Potentials along paths
    are read at the nearest grid point.

    Raises
    ------
    PositivityError
        If ``u`` is not positive on ``Omega'`` at the two times.
    ResidualError
        If the field fails the equation residual check.
    """
    if not 0 < t1 < t2:
        raise HarnackDomainError("need 0 < t1 < t2")
    mask = np.asarray(omega_mask, bool).ravel()
    u1, u2 = sol.values(t1), sol.values(t2)
    if np.any(u1[mask] <= 0) or np.any(u2[mask] <= 0):
        raise PositivityError("u is not positive on the domain")
    res = max(sol.residual(t1), sol.residual(t2))
    if res > residual_tol:
        raise ResidualError("equation residual %.3g exceeds %.3g" % (res, residual_tol))
    pts = sol.points
    i1 = int(np.argmax(np.where(mask, u1, -np.inf)))
    i2 = int(np.argmin(np.where(mask, u2, np.inf)))
    quotient = float(u1[i1] / u2[i2])
    theta, gamma = sol.potential_bounds()
    R = sol.default_R if R is None else R
    nodes = sol.geodesic(pts[i1], pts[i2], np.linspace(0, 1, chain_nodes + 1))
    times = np.linspace(t1, t2, chain_nodes + 1)
    bound = 1.0
    chain = []
    for i in range(chain_nodes):
        bound *= _segment_bound(sol, nodes[i], nodes[i + 1], times[i], times[i + 1],
                                alpha, R, theta, gamma, C)
        chain.append([nodes[i].tolist(), nodes[i + 1].tolist(),
                      float(times[i]), float(times[i + 1])])
    params = {"alpha": alpha, "R": R, "K": sol.ricci_lower, "theta": theta,
              "gamma": gamma, "n": 2, "t1": t1, "t2": t2,
              "C": LIYAU_C if C is None else C}
    return HarnackReport(quotient, float(bound), params, chain)


def random_torus_case(rng, n=16, period=1.0):
    """Positive initial data and a smooth potential on a torus grid."""
    x = np.arange(n) * period / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    centre = rng.uniform(0, period, 2)
    dx = _torus_displacement(np.stack([X, Y], -1), centre, period)
    width = rng.uniform(0.05, 0.2) * period
    u0 = 0.05 + np.exp(-np.sum(dx ** 2, axis=-1) / (2 * width ** 2))
    amp = rng.uniform(0.0, 5.0)
    kx, ky = rng.integers(1, 3, 2)
    phase = rng.uniform(0, 2 * np.pi, 2)
    q = amp * np.cos(2 * np.pi * kx * X / period + phase[0]) * np.cos(
        2 * np.pi * ky * Y / period + phase[1])
    return u0, q


def _disk_mask(n, period, centre, radius):
    x = np.arange(n) * period / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    d = _torus_displacement(np.stack([X, Y], -1), centre, period)
    return np.sum(d ** 2, axis=-1) <= radius ** 2


def random_cases(seed, count, n=16):
    """Deterministic battery of ``(solution, mask, t1, t2)`` torus cases."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        u0, q = random_torus_case(rng, n)
        sol = TorusSolution(u0, q)
        mask = _disk_mask(n, 1.0, rng.uniform(0, 1, 2), rng.uniform(0.1, 0.3))
        t1 = rng.uniform(0.01, 0.2)
        t2 = t1 + rng.uniform(0.05, 0.5)
        yield sol, mask, t1, t2


def random_sphere_cases(seed, count):
    """Deterministic battery of sphere cases with cap-shaped domains."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        x0 = rng.normal(size=3)
        sol = SphereSolution(x0, t0=rng.uniform(0.02, 0.2),
                             constant=rng.uniform(0.0, 0.5))
        centre = rng.normal(size=3)
        centre /= np.linalg.norm(centre)
        mask = sol.points @ centre >= np.cos(rng.uniform(0.3, 1.0))
        t1 = rng.uniform(0.01, 0.2)
        t2 = t1 + rng.uniform(0.05, 0.5)
        yield sol, mask, t1, t2


def calibrate_liyau_constant(seed=0, count=200, alphas=(1.25, 1.5, 2.0, 3.0)):
    """Smallest ``C`` making every case of the battery pass for every alpha."""
    required = 0.0
    for sol, mask, t1, t2 in random_cases(seed, count):
        for alpha in alphas:
            rep = harnack_scan(sol, mask, t1, t2, alpha=alpha, C=0.0)
            if rep.quotient > rep.bound:
                A_unit = liyau_A(alpha, rep.params["R"], 0.0, rep.params["theta"],
                                 rep.params["gamma"], C=1.0)
                need = math.log(rep.quotient / rep.bound) / (A_unit * (t2 - t1))
                required = max(required, need)
    return required


@dataclass
class KSChain:
    points: np.ndarray
    times: list
    N: int
    R: Fraction
    theta: Fraction

    def check(self, s, l, delta):
        """Re-check the construction's constraints in exact arithmetic."""
        s, l, delta = Fraction(s), Fraction(l), Fraction(delta)
        ok_time = all(self.times[i + 1] - self.theta * self.R ** 2 >= s / 4
                      for i in range(self.N))
        steps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        ok_step = bool(np.all(steps <= float(self.R) / 2 * (1 + 1e-12)))
        ok_radius = self.R <= delta / 2
        return {"time_window": ok_time, "step": ok_step, "radius": ok_radius}

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("i,t," + ",".join("x%d" % j for j in range(self.points.shape[1]))
                     + ",R,theta\n")
            for i, (p, t) in enumerate(zip(self.points, self.times)):
                fh.write("%d,%.17g," % (i, float(t)) + ",".join("%.17g" % v for v in p)
                         + ",%.17g,%.17g\n" % (float(self.R), float(self.theta)))


def ks_chain(x, y, s, t, delta, l=None, clearance=None, n_check=257):
    """Chain of points and times joining ``(y, s)`` to ``(x, t)``.

    ``N`` is the smallest integer with
    ``N > max(2 (t - s)/s, l / min(sqrt(s)/4, delta/4))``, ``R = 2l/N``,
    ``theta = 1 + (t - s)/(R^2 N)`` and the times are equally spaced. The
    integer choice is made in exact rational arithmetic (``sqrt(s)`` is the
    only irrational input and is bracketed).

    Raises
    ------
    ClearanceError
        If ``clearance`` (distance to the boundary) drops below ``delta`` on
        the segment.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if not 0 < s < t:
        raise HarnackDomainError("need 0 < s < t")
    dist = float(np.linalg.norm(x - y))
    l = Fraction(dist).limit_denominator(10 ** 12) if l is None else Fraction(l)
    if float(l) < dist * (1 - 1e-12):
        raise HarnackDomainError("l must bound |x - y|")
    if clearance is not None:
        seg = y[None, :] + np.linspace(0, 1, n_check)[:, None] * (x - y)[None, :]
        if np.min([clearance(p) for p in seg]) < delta:
            raise ClearanceError("segment clearance below delta = %g" % delta)
    s_f, t_f, d_f = Fraction(s), Fraction(t), Fraction(delta)
    sqrt_s = Fraction(math.sqrt(s))
    if sqrt_s * sqrt_s == s_f:
        quarter = min(sqrt_s / 4, d_f / 4)
    else:
        quarter = min(Fraction(math.nextafter(math.sqrt(s), 0.0)) / 4, d_f / 4)
    bound = max(2 * (t_f - s_f) / s_f, l / quarter)
    N = math.floor(bound) + 1
    if l == 0:
        R = Fraction(0)
        theta = Fraction(1)
    else:
        R = 2 * l / N
        theta = 1 + (t_f - s_f) / (R * R * N)
    points = y[None, :] + np.arange(N + 1)[:, None] / N * (x - y)[None, :]
    times = [s_f + (t_f - s_f) * i / N for i in range(N + 1)]
    return KSChain(points, times, N, R, theta)

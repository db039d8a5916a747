"""Singular potentials along curves and the backward log-profile function."""

from dataclasses import dataclass

import numpy as np

from .curves import MeasureSamples
from .models import (_sphere_series, _torus_kernel, gaussian_p0, sphere_degree,
                     sphere_u0)


class QuadratureError(RuntimeError):
    """Time quadrature did not converge."""


class SandwichError(ValueError):
    """The log sandwich fails on the validation annulus."""

    def __init__(self, message, admissible_radius):
        super().__init__(message)
        self.admissible_radius = admissible_radius


_SPHERE_SPECTRAL_DEGREE = 200


def _kernel_matrix(model, x, xi, sigma):
    """Kernel ``p(x_i, xi_j, sigma_j)`` as an array of shape (n, P)."""
    sig = sigma[None, :]
    if model.surface == "plane":
        d2 = np.sum((x[:, None, :] - xi[None, :, :]) ** 2, axis=-1)
        return np.exp(-d2 / (4 * sig)) / (4 * np.pi * sig)
    if model.surface == "torus":
        disp = model.displacement(x[:, None, :], xi[None, :, :])
        return _torus_kernel(disp, sig, model.periods)
    d = model.distance(x[:, None, :], xi[None, :, :])
    out = np.empty(d.shape)
    for j, s in enumerate(sigma):
        L = sphere_degree(s)
        if L <= _SPHERE_SPECTRAL_DEGREE:
            out[:, j] = _sphere_series(np.cos(d[:, j]), s, L)
        else:
            dj = np.minimum(d[:, j], 3.0)
            out[:, j] = gaussian_p0(dj, s) * sphere_u0(dj)
    return out


def _panels(tau, depth, breaks, ratio=4.0):
    """Panel edges geometric in ``t - s`` down to ``tau * ratio^-depth``."""
    edges = tau * ratio ** -np.arange(depth + 1.0)
    edges = np.concatenate([edges, [0.0], [b for b in breaks if 0 < b < tau]])
    return np.unique(edges)


def _integrate(model, curve, nu, x, t, edges, n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    lo, hi = edges[:-1], edges[1:]
    sigma = (0.5 * (hi - lo)[:, None] * (nodes[None, :] + 1) + lo[:, None]).ravel()
    w = (0.5 * (hi - lo)[:, None] * weights[None, :]).ravel()
    dens = nu.density(t - sigma)
    keep = dens > 0
    if not np.any(keep):
        return np.zeros(len(x))
    sigma, w = sigma[keep], w[keep] * dens[keep]
    xi = curve.position(t - sigma)
    return _kernel_matrix(model, x, xi, sigma) @ w


def _depth(tau, r, levels):
    """Number of factor-4 panels: ``levels`` halvings, extended to reach
    ``t - s ~ r^2 / 400`` where the kernel is below ``exp(-100)``."""
    halvings = levels
    if r > 0:
        halvings = max(levels, np.log2(400 * tau / r ** 2))
    return int(np.ceil(halvings / 2))


def singular_potential_U(model, curve, nu, x, t, T_start, n_nodes=16,
                         levels=40, rtol=1e-6, atol=1e-14, n_check=64,
                         chunks=8):
    """Potential ``U(x, t) = int_{T_start}^t p(x, xi(s), t - s) dnu(s)``.

    The time integral is split geometrically toward ``s = t``, with at least
    ``levels`` halvings and enough to reach ``t - s ~ r^2 / 400`` for each
    evaluation point, and at the breakpoints of ``nu`` and the curve samples.
    Each panel uses Gauss-Legendre quadrature. Up to ``n_check`` points,
    including the closest one, are re-evaluated with twice as many nodes.

    Parameters
    ----------
    x : array_like, shape (dim,) or (n, dim)
        Evaluation points.

    Returns
    -------
    ndarray
        Values at ``x``; ``inf`` where ``x`` sits on ``xi(t)`` and ``nu`` has
        positive density just before ``t``.

    Raises
    ------
    QuadratureError
        If the two quadrature orders disagree by more than
        ``atol + rtol * |U|`` at a checked point.
    """
    x = np.asarray(x, float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    tau = t - T_start
    if tau <= 0:
        raise ValueError("t must exceed T_start")
    breaks = np.concatenate([t - nu.breakpoints(), t - curve.times])
    dist = model.distance(x, curve.position(t))
    on_curve = dist == 0
    order = np.argsort(dist)
    u = np.zeros(len(x))
    for idx in np.array_split(order, min(chunks, len(x))):
        r = dist[idx][dist[idx] > 0]
        depth = _depth(tau, r.min() if len(r) else 0.0, levels)
        edges = _panels(tau, depth, breaks)
        u[idx] = _integrate(model, curve, nu, x[idx], t, edges, n_nodes)
    free = order[~on_curve[order]]
    if len(free):
        pick = free[np.unique(np.linspace(0, len(free) - 1, min(n_check, len(free))).astype(int))]
        depth = _depth(tau, dist[pick].min(), levels)
        edges = _panels(tau, depth, breaks)
        u2 = _integrate(model, curve, nu, x[pick], t, edges, 2 * n_nodes)
        bad = np.abs(u2 - u[pick]) > rtol * np.abs(u2) + atol
        if np.any(bad):
            raise QuadratureError(
                "time quadrature not converged at %d of %d checked points"
                % (int(bad.sum()), len(pick)))
    u = np.where(on_curve & (nu.density(t - 1e-300) > 0), np.inf, u)
    return u[0] if single else u


def _tangent_basis(model, x):
    """Orthonormal tangent vectors at each point, shape (n, 2, dim)."""
    n = len(x)
    if model.surface != "sphere":
        return np.broadcast_to(np.eye(2), (n, 2, 2))
    nrm = x / np.linalg.norm(x, axis=1, keepdims=True)
    helper = np.where(np.abs(nrm[:, :1]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]])
    e1 = np.cross(nrm, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(nrm, e1)
    return np.stack([e1, e2], axis=1)


def _shift(model, x, v):
    y = x + v
    if model.surface == "sphere":
        y = y / np.linalg.norm(y, axis=-1, keepdims=True)
    return y


@dataclass
class BackwardV:
    """Solution ``v`` of the backward heat equation with a log profile.

    ``v(x, t) = k * U(x, t_lo + t_hi - t)`` where ``U`` is the potential of the
    time-reversed curve with unit density starting ``lead`` before ``t_lo``.
    """

    model: object
    curve: object
    t_lo: float
    t_hi: float
    gamma: float
    lead: float
    scale: float
    lower_margin: float
    upper_margin: float
    radii: tuple

    def _reversed(self):
        rev = self.curve.reversed(self.t_lo, self.t_hi)
        nu = MeasureSamples.lebesgue(self.t_lo - self.lead, self.t_hi + 1.0)
        return rev, nu

    def value(self, x, t):
        rev, nu = self._reversed()
        s = self.t_lo + self.t_hi - t
        return self.scale * singular_potential_U(
            self.model, rev, nu, x, s, self.t_lo - self.lead)

    def V(self, x, t):
        return np.exp(-2 * self.value(x, t))

    def radius(self, x, t):
        return self.model.distance(np.atleast_2d(x), self.curve.position(t))

    def gradient_norm(self, x, t, rel_step=1e-4):
        """``|grad v|`` by central differences with step ``rel_step * r``."""
        x = np.atleast_2d(np.asarray(x, float))
        h = rel_step * self.radius(x, t)
        basis = _tangent_basis(self.model, x)
        g2 = np.zeros(len(x))
        for a in range(2):
            step = h[:, None] * basis[:, a, :]
            dv = self.value(_shift(self.model, x, step), t) - self.value(
                _shift(self.model, x, -step), t)
            g2 += (dv / (2 * h)) ** 2
        return np.sqrt(g2)


def _annulus_points(model, curve, radii, times, n_angle):
    theta = 2 * np.pi * (np.arange(n_angle) + 0.5) / n_angle
    pts, rr, tt = [], [], []
    for t in times:
        c = np.atleast_2d(curve.position(t))[0]
        basis = _tangent_basis(model, c[None, :])[0]
        for r in radii:
            if model.surface == "sphere":
                dirs = np.cos(theta)[:, None] * basis[0] + np.sin(theta)[:, None] * basis[1]
                p = np.cos(r) * c + np.sin(r) * dirs
            else:
                p = c + r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
            pts.append(p)
            rr.append(np.full(n_angle, r))
            tt.append(np.full(n_angle, t))
    return pts, np.concatenate(rr), np.concatenate(tt)


def backward_v(model, curve, t_window, gamma, radii=(1e-4, 1e-2), lead=None,
               n_radii=9, n_angle=8, n_times=5):
    """Build ``v`` with ``gamma log(1/r) <= v <= log(1/r)`` near the curve.

    The scale ``k`` is the largest value keeping ``v <= log(1/r)`` on the
    validation set (radii in ``radii``, ``n_angle`` directions, ``n_times``
    times in the window); the lower bound is then checked.

    Raises
    ------
    SandwichError
        If the lower bound fails; ``admissible_radius`` holds the largest
        validation radius up to which the sandwich still holds, or 0.
    """
    if not 0.5 < gamma < 1:
        raise ValueError("gamma must lie in (1/2, 1)")
    t_lo, t_hi = map(float, t_window)
    if not t_hi > t_lo:
        raise ValueError("empty time window")
    if not 0 < radii[0] < radii[1] < 1:
        raise ValueError("validation radii must satisfy 0 < r_lo < r_hi < 1")
    lead = (t_hi - t_lo) if lead is None else float(lead)
    bv = BackwardV(model, curve, t_lo, t_hi, gamma, lead, 1.0, 0.0, 0.0,
                   tuple(radii))
    r = np.geomspace(radii[0], radii[1], n_radii)
    times = np.linspace(t_lo, t_hi, n_times)
    pts, rr, tt = _annulus_points(model, curve, r, times, n_angle)
    vals = np.concatenate([
        bv.value(p, t) for p, t in zip(pts, np.repeat(times, n_radii))])
    q = vals / np.log(1 / rr)
    k = 1 / q.max()
    ratio = k * q
    bv.scale = k
    bv.upper_margin = float(1 - ratio.max())
    bv.lower_margin = float(ratio.min() - gamma)
    if bv.lower_margin < 0:
        good = [ri for ri in r if ratio[rr <= ri * (1 + 1e-12)].min() >= gamma]
        adm = max(good) if good else 0.0
        raise SandwichError(
            "sandwich fails for gamma = %.3g on radii [%.3g, %.3g]; holds up to "
            "r = %.3g" % (gamma, radii[0], radii[1], adm), adm)
    return bv

"""Space-time integrals near singular curves: annulus integrals, the
I-functional and recovery of the singular measure from log profiles."""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .potential import _tangent_basis

SCHEMA_VERSION = 1


class ResolutionError(ValueError):
    """A quadrature grid does not resolve the requested region."""


class SandwichViolation(ValueError):
    """``sum v_k`` leaves the product log sandwich on the integration set."""


class LogProfile:
    """``v = log(1/r)`` with ``r`` the distance to a curve.

    On the flat plane this is the exact backward-caloric log profile of a
    static point; it can stand in for :class:`BackwardV` anywhere a profile
    with ``value`` and ``gradient`` is expected.
    """

    def __init__(self, model, curve):
        self.model = model
        self.curve = curve

    def radius(self, x, t):
        return self.model.distance(np.atleast_2d(x), self.curve.position(t))

    def value(self, x, t):
        return -np.log(self.radius(x, t))

    def gradient(self, x, t):
        """Components of ``grad v`` in the tangent basis at ``x``."""
        x = np.atleast_2d(np.asarray(x, float))
        c = np.atleast_2d(self.curve.position(t))[0]
        r = self.radius(x, t)
        basis = _tangent_basis(self.model, x)
        if self.model.surface == "sphere":
            # grad d points away from c; its tangent part is -c projected
            toward = c[None, :] - np.sum(c * x, axis=1)[:, None] * x
            nrm = np.linalg.norm(toward, axis=1, keepdims=True)
            grad_d = -toward / np.where(nrm > 0, nrm, 1.0)
        else:
            grad_d = self.model.displacement(x, c) / r[:, None]
        g = -grad_d / r[:, None]
        return np.einsum("nad,nd->na", basis, g)


def _profile_gradient(profile, x, t):
    if hasattr(profile, "gradient"):
        return profile.gradient(x, t)
    # BackwardV: central differences along the tangent basis
    from .potential import _shift
    x = np.atleast_2d(np.asarray(x, float))
    h = 1e-4 * profile.radius(x, t)
    basis = _tangent_basis(profile.model, x)
    out = np.empty((len(x), 2))
    for a in range(2):
        step = h[:, None] * basis[:, a, :]
        dv = profile.value(_shift(profile.model, x, step), t) - profile.value(
            _shift(profile.model, x, -step), t)
        out[:, a] = dv / (2 * h)
    return out


def _gl_panels(edges, n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    lo, hi = np.asarray(edges[:-1]), np.asarray(edges[1:])
    x = (0.5 * (hi - lo)[:, None] * (nodes[None, :] + 1) + lo[:, None]).ravel()
    w = (0.5 * (hi - lo)[:, None] * weights[None, :]).ravel()
    return x, w


def _log_edges(r_min, r_max, breaks=(), width=1.0):
    lo, hi = np.log(r_min), np.log(r_max)
    n = max(1, int(np.ceil((hi - lo) / width)))
    edges = np.concatenate([np.linspace(lo, hi, n + 1),
                            [np.log(b) for b in breaks if r_min < b < r_max]])
    return np.unique(edges)


def _disk(model, center, logr, wlog, n_angle):
    """Points and area weights of a polar grid around ``center``."""
    theta = 2 * np.pi * np.arange(n_angle) / n_angle
    r = np.exp(logr)
    if model.surface == "sphere":
        basis = _tangent_basis(model, center[None, :])[0]
        dirs = np.cos(theta)[:, None] * basis[0] + np.sin(theta)[:, None] * basis[1]
        pts = (np.cos(r)[:, None, None] * center[None, None, :]
               + np.sin(r)[:, None, None] * dirs[None, :, :])
        jac = np.sin(r) * r
    else:
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        pts = center[None, None, :] + r[:, None, None] * dirs[None, :, :]
        jac = r * r
    w = (wlog * jac)[:, None] * np.full(n_angle, 2 * np.pi / n_angle)[None, :]
    return pts.reshape(-1, pts.shape[-1]), w.ravel(), np.repeat(r, n_angle)


def _union_grid(model, curves, t, r_min, r_max, breaks, n_angle, n_radial,
                width, power=4):
    """Polar grids around every curve, weighted as a partition of the union.

    The grid around curve ``k`` carries ``chi_k = r_k^-p / sum_j r_j^-p``
    (sums over curves whose ``r_max`` disk contains the point), so each
    singularity is integrated only by the grid centred on it.
    """
    edges = _log_edges(r_min, r_max, breaks, width)
    logr, wlog = _gl_panels(edges, n_radial)
    centers = [np.atleast_2d(c.position(t))[0] for c in curves]
    pts, wts = [], []
    for k, c in enumerate(centers):
        p, w, r = _disk(model, c, logr, wlog, n_angle)
        total = np.ones(len(p))
        for j, c2 in enumerate(centers):
            if j == k:
                continue
            rj = model.distance(p, c2)
            ratio = np.where(rj <= r_max, (r / np.maximum(rj, 1e-300)) ** power, 0.0)
            total += ratio
        pts.append(p)
        wts.append(w / total)
    return np.concatenate(pts), np.concatenate(wts)


def _time_nodes(t_lo, t_hi, breaks, n):
    edges = np.unique(np.concatenate(
        [[t_lo, t_hi], [b for b in breaks if t_lo < b < t_hi]]))
    return _gl_panels(edges, n)


def annulus_integrals(model, curve, u, delta, R_out, t1, t2, n_radial=16,
                      n_angle=16, n_time=8):
    """Integrals ``J1 = int int_{delta <= r <= R} u / (r |log r|)`` and
    ``J2 = (1/delta) int int_{delta/2 <= r <= delta} u`` over ``[t1, t2]``.

    ``u`` is a callable ``u(x, t)`` evaluated on polar grids around the curve.
    Each annulus gets ``n_radial`` Gauss-Legendre cells per e-fold in ``r``.

    Raises
    ------
    ResolutionError
        If an annulus has fewer than 8 radial cells.
    """
    if not 0 < delta < R_out < 1:
        raise ValueError("need 0 < delta < R_out < 1")
    if n_radial < 8:
        raise ResolutionError("under-resolved annulus: %d radial cells" % n_radial)
    tn, tw = _time_nodes(t1, t2, curve.times, n_time)
    e1 = _log_edges(delta, R_out)
    e2 = _log_edges(delta / 2, delta)
    l1, w1 = _gl_panels(e1, n_radial)
    l2, w2 = _gl_panels(e2, n_radial)
    J1 = J2 = 0.0
    for t, wt in zip(tn, tw):
        c = np.atleast_2d(curve.position(t))[0]
        p, w, r = _disk(model, c, l1, w1, n_angle)
        J1 += wt * np.sum(w * u(p, t) / (r * np.abs(np.log(r))))
        p, w, _ = _disk(model, c, l2, w2, n_angle)
        J2 += wt * np.sum(w * u(p, t)) / delta
    return float(J1), float(J2)


@dataclass
class RecoveryResult:
    """Pairing recovered from a sequence of ``rho`` values."""

    value: float
    rhos: list
    raw: list
    extrapolants: list
    flagged: bool

    def to_dict(self):
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        return d

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def richardson_log(rhos, values):
    """Extrapolate ``values`` to ``rho -> 0`` as a polynomial in ``1/|log rho|``.

    Returns the extrapolants using the last ``j`` samples, ``j = 1..n``.
    """
    x = 1 / np.abs(np.log(np.asarray(rhos, float)))
    f = np.asarray(values, float)
    out = []
    for j in range(1, len(x) + 1):
        xs, fs = x[-j:], f[-j:]
        coef = np.polyfit(xs, fs, j - 1)
        out.append(float(coef[-1]))
    return out


def _log_weighted(model, curves, profiles, u, rhos, psis, t_lo, t_hi, r_bar,
                  time_breaks, n_angle, n_radial, n_time, width, two_sided):
    """``int int |grad v|^2 chi psi u / |log rho|^2``, shape (len(psis), len(rhos))."""
    rhos = np.asarray(rhos, float)
    ncurves = len(curves)
    if all(isinstance(p, LogProfile) for p in profiles):
        # v~ >= log(1/r_k) - (l - 1) log(diameter) keeps r_k above rho / 10
        r_min = rhos.min() / 10
    else:
        r_min = rhos.min() ** 2
    breaks = [r ** (1.0 / j) for r in rhos for j in range(1, ncurves + 1)]
    tn, tw = _time_nodes(t_lo, t_hi, time_breaks, n_time)
    totals = np.zeros((len(psis), len(rhos)))
    for t, wt in zip(tn, tw):
        weight_t = np.array([float(p(t)) for p in psis])
        if not np.any(weight_t):
            continue
        pts, w = _union_grid(model, curves, t, r_min, r_bar, breaks, n_angle,
                             n_radial, width)
        vt = sum(p.value(pts, t) for p in profiles)
        g = sum(_profile_gradient(p, pts, t) for p in profiles)
        g2 = np.sum(g * g, axis=1)
        base = w * g2 * u(pts, t) * wt
        for i, rho in enumerate(rhos):
            keep = vt <= abs(np.log(rho))
            if two_sided:
                keep &= vt >= 0
            totals[:, i] += weight_t * np.sum(base[keep])
    return totals / np.log(rhos) ** 2


def measure_recovery(model, curves, u, rho_sequence, psi, t_window,
                     profiles=None, r_bar=0.5, time_breaks=(), n_angle=16,
                     n_radial=8, n_time=16, width=1.0, spread_tol=0.2):
    """Recover ``<mu, psi> = 2 lim (1/|log rho|^2) int |grad v|^2 chi psi u``.

    Parameters
    ----------
    curves : list of SingularCurve
        The integration domain is the union of the ``r_bar`` disks around them.
    u : callable
        ``u(x, t)`` for arrays of points at a fixed time.
    psi : callable or list of callables
        Test functions of time supported in ``t_window``.
    profiles : list, optional
        Functions whose sum is ``v``; each needs ``value`` and either
        ``gradient`` or ``radius``. Defaults to ``LogProfile`` of every curve.
    time_breaks : sequence of float
        Times where ``u`` or ``psi`` lose smoothness; used as panel edges.

    Returns
    -------
    RecoveryResult or list of RecoveryResult
        ``value`` is the Richardson extrapolant in ``1/|log rho|`` using all
        samples; ``flagged`` is set when the last two extrapolants differ by
        more than ``spread_tol`` of the larger of the result and the last raw
        value.
    """
    single = callable(psi)
    psis = [psi] if single else list(psi)
    if profiles is None:
        profiles = [LogProfile(model, c) for c in curves]
    raw = 2 * _log_weighted(model, curves, profiles, u, rho_sequence, psis,
                            t_window[0], t_window[1], r_bar, time_breaks,
                            n_angle, n_radial, n_time, width, False)
    out = []
    for row in raw:
        ext = richardson_log(rho_sequence, row)
        scale = max(abs(ext[-1]), abs(row[-1]))
        flagged = len(ext) > 1 and abs(ext[-1] - ext[-2]) > spread_tol * scale
        out.append(RecoveryResult(float(ext[-1]), [float(r) for r in rho_sequence],
                                  [float(v) for v in row], ext, bool(flagged)))
    return out[0] if single else out


def i_functional(model, curves, u, rho, r0, t1, t2, profiles=None, gamma=None,
                 check_radii=(1e-4, 1e-2), time_breaks=(), n_angle=16,
                 n_radial=8, n_time=16, width=1.0):
    """``I(rho) = int_{Q_r0 and rho <= r~ <= 1} u |grad v~|^2 / |log rho|^2``.

    ``v~`` is the sum of the profiles and ``r~ = exp(-v~)``. With ``gamma``
    given, the product sandwich ``r_1...r_l <= r~ <= (r_1...r_l)^gamma`` is
    checked where every ``r_k`` lies in ``check_radii``.

    Raises
    ------
    SandwichViolation
        If the product sandwich fails on the checked set.
    """
    if profiles is None:
        profiles = [LogProfile(model, c) for c in curves]
    if gamma is not None:
        _check_product(model, curves, profiles, gamma, check_radii, t1, t2)
    vals = _log_weighted(model, curves, profiles, u, [rho], [lambda t: 1.0],
                         t1, t2, r0, time_breaks, n_angle, n_radial, n_time,
                         width, True)
    return float(vals[0, 0])


def _check_product(model, curves, profiles, gamma, radii, t1, t2, n=5):
    for t in np.linspace(t1, t2, n):
        pts, _ = _union_grid(model, curves, t, radii[0], radii[1], (), 8, 4, 1.0)
        r = np.stack([model.distance(pts, c.position(t)) for c in curves])
        inside = np.all((r >= radii[0]) & (r <= radii[1]), axis=0)
        if not np.any(inside):
            continue
        logs = np.sum(np.log(1 / r[:, inside]), axis=0)
        vt = sum(p.value(pts[inside], t) for p in profiles)
        if np.any(vt > logs * (1 + 1e-9)) or np.any(vt < gamma * logs * (1 - 1e-9)):
            raise SandwichViolation("product sandwich fails at t = %.6g" % t)


@dataclass
class DominationResult:
    ok: bool
    margins: list


def domination_check(mu, mu_k, gamma, tol=1e-6):
    """Check ``gamma^4 <mu_k, psi> <= <mu, psi> + tol`` for every test function.

    Parameters
    ----------
    mu : sequence of float
        Pairings of the merged measure with each test function.
    mu_k : sequence of sequences of float
        Pairings of each single-curve measure with the same test functions.
    """
    mu = np.asarray(mu, float)
    margins = []
    for row in mu_k:
        margins.append((mu + tol - gamma ** 4 * np.asarray(row, float)).tolist())
    ok = all(min(m) >= 0 for m in margins)
    return DominationResult(bool(ok), margins)


class CachedField:
    """Memoize a field ``u(x, t)`` on repeated grids.

    Recoveries of several profiles over the same curves visit identical
    points, so the expensive potential is evaluated once per time node.
    """

    def __init__(self, u):
        self.u = u
        self._store = {}

    def __call__(self, x, t):
        x = np.ascontiguousarray(x, float)
        key = (float(t), x.shape, hash(x.tobytes()))
        if key not in self._store:
            self._store[key] = self.u(x, t)
        return self._store[key]

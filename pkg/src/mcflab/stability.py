"""Gaussian-weighted stability form of shrinkers and logarithmic cutoffs.

The form is ``Q(phi) = int (|grad phi|^2 - (1/2 + |A|^2) phi^2) e^{-|x|^2/4}``,
assembled with piecewise-linear gradients, consistent P1 mass on each face
and the Gaussian weight and ``|A|^2`` taken at face centroids.
"""

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, sparse
from scipy.sparse.linalg import splu

from .mesh.queries import intrinsic_distance

logger = logging.getLogger(__name__)


class SupportError(ValueError):
    """A test function is nonzero outside its allowed support."""


class StagnationError(RuntimeError):
    """Inverse iteration failed to converge."""


class NoWitnessError(RuntimeError):
    """No test function with negative form was found."""


@dataclass
class QuadraticFormReport:
    q: float
    norm_sq: float
    rayleigh: float
    field: np.ndarray
    delta: float = float("nan")
    rho: float = float("nan")
    cutoff_energy: float = float("nan")
    method: str = ""

    def to_dict(self):
        d = asdict(self)
        d.pop("field")
        return d

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def field_to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("vertex,value\n")
            for i, v in enumerate(self.field):
                fh.write("%d,%.17g\n" % (i, v))


def _face_data(mesh, face_mask=None):
    v, f = mesh.vertices, mesh.faces
    if face_mask is not None:
        f = f[face_mask]
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    N = np.cross(b - a, c - a)
    dbl = np.einsum("ij,ij->i", N, N)
    area = 0.5 * np.sqrt(dbl)
    # gradients of the three hat functions on each face
    grads = np.stack([np.cross(N, c - b), np.cross(N, a - c), np.cross(N, b - a)], axis=1) / dbl[:, None, None]
    cen = (a + b + c) / 3
    weight = np.exp(-np.einsum("ij,ij->i", cen, cen) / 4)
    A2 = mesh.geometry().A2[f].mean(axis=1)
    return f, area, grads, weight, A2


def assemble(mesh, face_mask=None):
    """Stiffness ``K`` of ``Q`` and Gaussian mass ``M``, both sparse symmetric."""
    f, area, grads, weight, A2 = _face_data(mesh, face_mask)
    stiff = np.einsum("fik,fjk->fij", grads, grads) * (area * weight)[:, None, None]
    local_mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
    mass = (area * weight)[:, None, None] * local_mass[None]
    pot = (0.5 + A2)[:, None, None] * mass
    rows = np.repeat(f, 3, axis=1).ravel()
    cols = np.tile(f, (1, 3)).ravel()
    n = mesh.n_vertices
    K = sparse.csr_matrix(((stiff - pot).ravel(), (rows, cols)), shape=(n, n))
    M = sparse.csr_matrix((mass.ravel(), (rows, cols)), shape=(n, n))
    return K, M


def quadratic_form(mesh, phi, R=np.inf, face_mask=None, tol=1e-12):
    """``Q(phi)`` and the weighted norm ``int phi^2 e^{-|x|^2/4}``.

    Raises
    ------
    SupportError
        ``phi`` exceeds ``tol`` at a vertex outside ``B_R(0)``.
    """
    phi = np.asarray(phi, dtype=float)
    out = np.linalg.norm(mesh.vertices, axis=1) >= R
    if np.any(np.abs(phi[out]) > tol):
        k = int(np.flatnonzero(out & (np.abs(phi) > tol))[0])
        raise SupportError("phi is nonzero at vertex %d outside B_R" % k)
    K, M = assemble(mesh, face_mask)
    q = float(phi @ (K @ phi))
    nrm = float(phi @ (M @ phi))
    return q, nrm


def min_rayleigh(mesh, R=np.inf, tol=1e-8, max_iter=2000, face_mask=None):
    """Smallest ``Q(phi) / ||phi||^2`` over ``phi`` vanishing outside ``B_R(0)``.

    Inverse iteration on ``K phi = lambda M phi`` shifted below the spectrum:
    ``K >= -(1/2 + max|A|^2) M``, so ``K - sigma M`` is positive definite for
    ``sigma = -(3/2 + max|A|^2)``.

    Returns
    -------
    lam : float
    phi : ndarray
        Eigenfield normalized to unit weighted norm, zero outside the ball.

    Raises
    ------
    ValueError
        No vertex inside the ball.
    StagnationError
    """
    inside = np.linalg.norm(mesh.vertices, axis=1) < R
    K, M = assemble(mesh, face_mask)
    active = inside & (np.asarray(M.sum(axis=1)).ravel() > 0)
    idx = np.flatnonzero(active)
    if len(idx) == 0:
        raise ValueError("mesh does not meet B_R(0)")
    Ki = K[idx][:, idx].tocsc()
    Mi = M[idx][:, idx].tocsc()
    sigma = -(1.5 + float(mesh.geometry().A2.max()))
    lu = splu((Ki - sigma * Mi).tocsc())
    x = np.ones(len(idx)) + 1e-3 * np.cos(np.arange(len(idx)))
    lam_old = np.inf
    for it in range(max_iter):
        y = lu.solve(Mi @ x)
        x = y / np.sqrt(y @ (Mi @ y))
        lam = float(x @ (Ki @ x))
        if abs(lam - lam_old) <= tol * max(1.0, abs(lam)):
            break
        lam_old = lam
    else:
        raise StagnationError("inverse iteration did not converge in %d steps" % max_iter)
    phi = np.zeros(mesh.n_vertices)
    phi[idx] = x
    if phi.sum() < 0:
        phi = -phi
    return lam, phi


# ----------------------------------------------------------------------
# logarithmic cutoffs
# ----------------------------------------------------------------------
def eta_profile(s, rho):
    """``log rho / log s`` for ``0 < s < rho`` and 1 for ``s >= rho``."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        val = np.where(s >= rho, 1.0, np.log(rho) / np.log(np.where((s > 0) & (s < rho), s, 0.5 * rho)))
    return np.where(s <= 0, 0.0, val)


def eta_derivative(s, rho):
    s = np.asarray(s, dtype=float)
    inside = (s > 0) & (s < rho)
    ss = np.where(inside, s, 0.5 * rho)
    return np.where(inside, -np.log(rho) / (ss * np.log(ss) ** 2), 0.0)


def beta_profile(s, delta):
    """``C^1`` step: 0 below ``delta / 2``, 1 above ``delta``, slope at most ``3 / delta``."""
    z = np.clip((np.asarray(s, dtype=float) - delta / 2) / (delta / 2), 0.0, 1.0)
    return z * z * (3 - 2 * z)


def beta_derivative(s, delta):
    z = (np.asarray(s, dtype=float) - delta / 2) / (delta / 2)
    inside = (z > 0) & (z < 1)
    return np.where(inside, 6 * z * (1 - z) / (delta / 2), 0.0)


def cutoff_profile(s, delta, rho):
    return eta_profile(s, rho) * beta_profile(s, delta)


def _check_cutoff(delta, rho):
    if not 0 < delta < rho < 1:
        raise ValueError("need 0 < delta < rho < 1, got delta=%g rho=%g" % (delta, rho))


def radial_cutoff_energy(delta, rho, center_sq=0.0):
    """``int |grad f|^2 e^{-|x|^2/4}`` for one point on a plane, by radial quadrature.

    ``f(r) = eta(r) beta(r)`` depends only on the distance ``r`` to the point.
    The Gaussian weight is taken as ``e^{-(|p|^2 + r^2)/4}`` with
    ``|p|^2 = center_sq``, exact for ``p = 0``. The ``eta`` part is
    integrated in ``log r``, the ``beta`` transition on its own interval.
    ``delta = 0`` gives the limit ``delta -> 0``, where only ``eta`` remains.
    """
    if delta == 0:
        if not 0 < rho < 1:
            raise ValueError("need 0 < rho < 1, got rho=%g" % rho)
        lr = np.log(rho)
        # |eta'|^2 r = log(rho)^2 / (r log(r)^4); in t = log r the integrand is lr^2 / t^4
        val, _ = integrate.quad(lambda t: lr * lr / t ** 4 * np.exp(-(center_sq + np.exp(2 * t)) / 4),
                                -np.inf, lr, epsabs=0, epsrel=1e-12, limit=400)
        return 2 * np.pi * val
    _check_cutoff(delta, rho)

    def integrand(r):
        d = eta_derivative(r, rho) * beta_profile(r, delta) + eta_profile(r, rho) * beta_derivative(r, delta)
        return 2 * np.pi * r * d * d * np.exp(-(center_sq + r * r) / 4)

    ramp, _ = integrate.quad(integrand, delta / 2, delta, limit=200, epsabs=0, epsrel=1e-12)
    tail, _ = integrate.quad(lambda t: integrand(np.exp(t)) * np.exp(t), np.log(delta), np.log(rho),
                             limit=400, epsabs=0, epsrel=1e-12)
    return ramp + tail


def cutoff_energy_bound(delta, rho, C):
    """``C (1 / |log rho| + |log rho|^2 / |log delta|)``."""
    lr, ld = abs(np.log(rho)), abs(np.log(delta))
    return C * (1.0 / lr + lr * lr / ld)


@dataclass
class CutoffResult:
    field: np.ndarray
    energy: float
    bound: float
    within_bound: bool


def log_cutoff(mesh, points, delta, rho, C=None, distances=None):
    """Product cutoff ``f = prod_k eta(r_k) beta(r_k)`` around surface points.

    ``r_k`` is the intrinsic distance from the vertex nearest to each point.
    The energy ``int |grad f|^2 e^{-|x|^2/4}`` uses piecewise-linear
    gradients on the mesh.

    Parameters
    ----------
    mesh : TriMesh
    points : array_like, shape (k, 3)
    delta, rho : float
        ``0 < delta < rho < 1``.
    C : float, optional
        Constant of the energy bound; when given, ``within_bound`` reports
        ``energy <= C (1/|log rho| + |log rho|^2/|log delta|)``.
    distances : array_like, shape (k, n), optional
        Precomputed ``r_k``.
    """
    _check_cutoff(delta, rho)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if distances is None:
        src = [int(np.argmin(np.linalg.norm(mesh.vertices - p, axis=1))) for p in pts]
        distances = [intrinsic_distance(mesh, s) for s in src]
    f = np.ones(mesh.n_vertices)
    for r in distances:
        f = f * cutoff_profile(np.asarray(r), delta, rho)
    _, area, grads, weight, _ = _face_data(mesh)
    fg = np.einsum("fik,fi->fk", grads, f[mesh.faces])
    energy = float(np.sum(area * weight * np.einsum("fk,fk->f", fg, fg)))
    bound = cutoff_energy_bound(delta, rho, C) if C is not None else float("nan")
    ok = bool(energy <= bound) if C is not None else True
    return CutoffResult(field=f, energy=energy, bound=bound, within_bound=ok)


# ----------------------------------------------------------------------
# instability witnesses
# ----------------------------------------------------------------------
def ball_cutoff(mesh, R, rho=0.5):
    """Constant 1 on ``B_{(1 - rho) R}``, log profile down to 0 at ``|x| = R``."""
    s = (R - np.linalg.norm(mesh.vertices, axis=1)) / R
    return eta_profile(np.clip(s, 0.0, 1.0), rho)


def instability_witness(mesh, R, threshold=-1e-6, face_mask=None):
    """A test function supported in ``B_R(0)`` with ``Q < threshold``.

    The cut-off constant is tried first; inverse iteration is the fallback.

    Returns
    -------
    QuadraticFormReport

    Raises
    ------
    NoWitnessError
    """
    phi = ball_cutoff(mesh, R)
    q, nrm = quadratic_form(mesh, phi, R, face_mask=face_mask)
    if nrm > 0 and q < threshold:
        return QuadraticFormReport(q=q, norm_sq=nrm, rayleigh=q / nrm, field=phi, method="cutoff-constant")
    lam, phi = min_rayleigh(mesh, R, face_mask=face_mask)
    q, nrm = quadratic_form(mesh, phi, R, face_mask=face_mask)
    if q < threshold:
        return QuadraticFormReport(q=q, norm_sq=nrm, rayleigh=lam, field=phi, method="eigenfield")
    raise NoWitnessError("no witness with Q < %g inside B_%g (min quotient %.4g)" % (threshold, R, lam))

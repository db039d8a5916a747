"""Gaussian-weighted functionals of surfaces and self-shrinker diagnostics."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .mesh.primitives import _midpoint_subdivide
from .mesh.queries import area_in_ball

logger = logging.getLogger(__name__)

SPHERE_ENTROPY = 4.0 / np.e
CYLINDER_ENTROPY = np.sqrt(2 * np.pi / np.e)


class NotAShrinkerError(ValueError):
    """The residual precondition for shrinker classification failed."""


@dataclass
class ShrinkerReport:
    """Scalar summary of a surface relative to the shrinker equation."""

    f: float
    entropy: float
    entropy_argmax: tuple
    res_l2: float
    res_sup: float
    density_curve: list = field(default_factory=list)
    ilmanen_slack: float = float("nan")
    cls: str = "other"

    def to_dict(self):
        return {
            "f": self.f,
            "entropy": self.entropy,
            "entropy_argmax": list(self.entropy_argmax),
            "res_l2": self.res_l2,
            "res_sup": self.res_sup,
            "density_curve": list(self.density_curve),
            "ilmanen_slack": self.ilmanen_slack,
            "class": self.cls,
        }


def _face_quadrature(vertices, faces, max_diam):
    """Centroids and areas, subdividing faces larger than ``max_diam``."""
    v = vertices
    f = faces
    cen_all, area_all = [], []
    for _ in range(12):
        p = v[f]
        diam = np.max(np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2), axis=1)
        big = diam > max_diam
        small = f[~big]
        q = v[small]
        cen_all.append(q.mean(axis=1))
        area_all.append(0.5 * np.linalg.norm(np.cross(q[:, 1] - q[:, 0], q[:, 2] - q[:, 0]), axis=1))
        if not np.any(big):
            break
        sub = f[big]
        used = np.unique(sub)
        remap = np.full(len(v), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        v, f = _midpoint_subdivide(v[used], remap[sub])
    return np.concatenate(cen_all), np.concatenate(area_all)


def f_functional(mesh, x0=(0.0, 0.0, 0.0), t0=1.0, faces=None):
    """Gaussian area ``(4 pi t0)^{-1} int exp(-|x - x0|^2 / (4 t0)) dmu``.

    Centroid quadrature on faces, with faces of diameter above
    ``sqrt(t0) / 4`` subdivided until they are below it.

    Parameters
    ----------
    mesh : TriMesh
    x0 : array_like, shape (3,)
    t0 : float
        Scale, must be positive.
    faces : array_like, optional
        Restrict the integral to these faces.
    """
    if t0 <= 0:
        raise ValueError("t0 must be positive")
    x0 = np.asarray(x0, dtype=float)
    f = mesh.faces if faces is None else mesh.faces[np.asarray(faces, dtype=np.int64)]
    if len(f) == 0:
        return 0.0
    cen, area = _face_quadrature(mesh.vertices, f, np.sqrt(t0) / 4)
    d2 = np.einsum("ij,ij->i", cen - x0, cen - x0)
    return float(np.sum(area * np.exp(-d2 / (4 * t0))) / (4 * np.pi * t0))


def _f_batch(cen, area, x0s, t0s):
    out = np.empty(len(x0s))
    for i, (x0, t0) in enumerate(zip(x0s, t0s)):
        d2 = np.einsum("ij,ij->i", cen - x0, cen - x0)
        out[i] = np.sum(area * np.exp(-d2 / (4 * t0))) / (4 * np.pi * t0)
    return out


def entropy_estimate(mesh, grid=5, n_scales=9, rounds=3, return_argmax=False):
    """Supremum of the F-functional over centers and scales.

    A coarse grid of centers over the bounding box and log-spaced scales in
    ``[1e-2 diam^2, 1e2 diam^2]`` is refined ``rounds`` times by halving the
    grid spacing around the best cell.

    Returns
    -------
    float, or (float, (x0, t0)) when ``return_argmax``
    """
    v = mesh.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    diam = float(np.linalg.norm(hi - lo))
    tmin = 1e-2 * diam ** 2
    # the quadrature mesh is refined once for the smallest scale searched
    cen, area = _face_quadrature(v, mesh.faces, np.sqrt(tmin) / 4)
    axes = [np.linspace(lo[k], hi[k], grid) if hi[k] > lo[k] else np.array([lo[k]]) for k in range(3)]
    logt = np.linspace(np.log(tmin), np.log(1e2 * diam ** 2), n_scales)
    step = np.array([(a[1] - a[0]) if len(a) > 1 else 0.0 for a in axes])
    dlog = logt[1] - logt[0]
    X, Y, Z, T = np.meshgrid(axes[0], axes[1], axes[2], logt, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    vals = _f_batch(cen, area, pts, np.exp(T.ravel()))
    best = int(np.argmax(vals))
    bx, bt, bv = pts[best], T.ravel()[best], vals[best]
    for _ in range(rounds):
        step = step / 2
        dlog = dlog / 2
        offs = np.array([-1.0, 0.0, 1.0])
        cand = []
        for a in offs:
            for b in offs:
                for c in offs:
                    for d in offs:
                        cand.append((bx + step * np.array([a, b, c]), bt + d * dlog))
        cx = np.array([c[0] for c in cand])
        ct = np.array([c[1] for c in cand])
        cv = _f_batch(cen, area, cx, np.exp(ct))
        k = int(np.argmax(cv))
        if cv[k] > bv:
            bx, bt, bv = cx[k], ct[k], cv[k]
    if return_argmax:
        return float(bv), (bx, float(np.exp(bt)))
    return float(bv)


def shrinker_residual(mesh, T_minus_t=None, mask=None, x0=None):
    """Residual ``H - <x - x0, n> / (2 (T - t))`` at the vertices.

    ``T_minus_t=None`` uses the self-shrinker normalization ``H - <x, n>/2``.

    Returns
    -------
    l2 : float
        Vertex-area weighted L2 norm.
    sup : float
    """
    r = residual_field(mesh, T_minus_t, x0)
    a = mesh.geometry().vertex_area
    if mask is not None:
        r, a = r[mask], a[mask]
    if len(r) == 0:
        return 0.0, 0.0
    return float(np.sqrt(np.sum(a * r * r))), float(np.max(np.abs(r)))


def residual_field(mesh, T_minus_t=None, x0=None):
    geo = mesh.geometry()
    x = mesh.vertices if x0 is None else mesh.vertices - np.asarray(x0, float)
    scale = 0.5 if T_minus_t is None else 1.0 / (2.0 * T_minus_t)
    if T_minus_t is not None and T_minus_t <= 0:
        raise ValueError("T - t must be positive")
    return geo.mean_curvature - scale * np.einsum("ij,ij->i", x, geo.normal)


def gaussian_dissipation(mesh, mask=None):
    """``(4 pi)^{-1} int |H - <x, n>/2|^2 exp(-|x|^2 / 4) dmu``.

    This is the rate of decrease of ``F_{0,1}`` along the rescaled flow.
    """
    geo = mesh.geometry()
    r = residual_field(mesh)
    w = np.exp(-np.einsum("ij,ij->i", mesh.vertices, mesh.vertices) / 4)
    a = geo.vertex_area
    if mask is not None:
        r, w, a = r[mask], w[mask], a[mask]
    return float(np.sum(a * w * r * r) / (4 * np.pi))


def gaussian_density(checkpoints, x0, T):
    """Huisken's density ratio along a sequence of flow snapshots.

    Parameters
    ----------
    checkpoints : sequence of (t, TriMesh)
        Snapshots at times before ``T``.
    x0 : array_like, shape (3,)
    T : float

    Returns
    -------
    values : ndarray
        ``int Phi_{(x0, T)}(x, t) dmu_t`` per snapshot.
    limit : float
        Richardson extrapolation of the last three samples to ``t = T``,
        treating the error as linear in ``sqrt(T - t)``.
    monotone : bool
        True when the sequence is nonincreasing within 1e-3.
    """
    ts = np.array([c[0] for c in checkpoints], dtype=float)
    if len(ts) == 0:
        raise ValueError("no checkpoints")
    if T <= ts.max():
        raise ValueError("T must exceed every checkpoint time")
    vals = np.array([f_functional(m, x0, T - t) for t, m in checkpoints])
    monotone = bool(np.all(np.diff(vals) <= 1e-3))
    if len(vals) >= 3:
        s = np.sqrt(T - ts[-3:])
        coef = np.polyfit(s, vals[-3:], 1)
        limit = float(coef[-1])
    else:
        limit = float(vals[-1])
    return vals, limit, monotone


def ilmanen_bound_check(mesh, p=(0.0, 0.0, 0.0), R=2.0, eps=0.5, genus=0, n_radii=16):
    """Slack of the local Gauss-Bonnet type bound on ``int |A|^2``.

    Evaluates ``RHS - LHS`` with ``LHS = (1 - eps) int_{B_1(p)} |A|^2`` and
    ``RHS = int_{B_R(p)} H^2 + 8 pi genus + 24 pi R^2 / (eps (R - 1)^2) * ratio``
    where ``ratio`` is the largest area ratio ``Area(B_r) / (pi r^2)`` over
    16 log-spaced radii in ``(0, R]``. Integrals use vertex areas.

    Returns
    -------
    slack : float
    lhs : float
    """
    if R <= 1:
        raise ValueError("R must exceed 1")
    geo = mesh.geometry()
    p = np.asarray(p, dtype=float)
    d = np.linalg.norm(mesh.vertices - p, axis=1)
    a = geo.vertex_area
    lhs = (1 - eps) * float(np.sum((a * geo.A2)[d <= 1.0]))
    h2 = float(np.sum((a * geo.H ** 2)[d <= R]))
    h = mesh.mean_edge_length()
    radii = np.geomspace(max(4 * h, 1e-3 * R), R, n_radii)
    ratio = max(area_in_ball(mesh, p, r) / (np.pi * r * r) for r in radii)
    rhs = h2 + 8 * np.pi * genus + 24 * np.pi * R * R / (eps * (R - 1) ** 2) * ratio
    return rhs - lhs, lhs


def classify_flat(mesh, delta=0.1, eps_entropy=0.1, residual_max=0.25, mask=None):
    """Classify an approximate shrinker as plane, sphere, cylinder or other.

    Parameters
    ----------
    mesh : TriMesh
    delta : float
        Mean curvature bound for the plane class.
    eps_entropy : float
        Entropy margin above 1 for the plane class.
    residual_max : float
        Largest shrinker residual accepted on the mask.
    mask : array_like of bool, optional
        Vertices where the surface is meant to be a shrinker (for example the
        straight part of a capped tube). Defaults to interior vertices.

    Raises
    ------
    NotAShrinkerError
    """
    if mask is None:
        mask = ~mesh.boundary_vertices
    _, sup = shrinker_residual(mesh, mask=mask)
    if sup > residual_max:
        raise NotAShrinkerError("not a shrinker: residual sup %.3g > %.3g" % (sup, residual_max))
    H = mesh.geometry().H[mask]
    lam = entropy_estimate(mesh)
    if np.max(np.abs(H)) <= delta and lam < 1 + eps_entropy:
        return "plane-like"
    if abs(lam / SPHERE_ENTROPY - 1) <= 0.01:
        return "sphere-like"
    if abs(lam / CYLINDER_ENTROPY - 1) <= 0.01:
        return "cylinder-like"
    # on a capped tube the caps spoil the global entropy; use the tube only
    if mask is not None and not np.all(mask):
        fmask = np.all(mask[mesh.faces], axis=1)
        ftube = f_functional(mesh, faces=np.flatnonzero(fmask))
        if abs(ftube / CYLINDER_ENTROPY - 1) <= 0.01:
            return "cylinder-like"
    return "other"

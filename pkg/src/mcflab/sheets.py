"""Sheets over a reference surface: heights, multiplicity and graph geometry.

A surface close to a reference ``Sigma`` is described by normal graphs
``x + u(x) n(x)``. The graph quantities follow the outward-normal
convention of :mod:`mcflab.mesh.geometry`; with ``S = dn`` the shape
operator (trace ``H``) the tangent map of the normal offset is
``B(p, s) = Id + s S(p)``, so pushing a sphere outward enlarges it.
"""

import json
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .flow import FlowConfig, step_flow
from .mesh.geometry import fit_scalar_derivatives, laplacian_operators
from .mesh.queries import area_in_ball, line_triangle_hits

logger = logging.getLogger(__name__)


class SheetError(ValueError):
    """Sheet labeling or graph evaluation failed."""


class MultiplicityError(ValueError):
    """Density ratio too far from an integer."""


@dataclass
class SheetBundle:
    """Normal heights of the sheets of a target surface over a reference.

    Attributes
    ----------
    reference : TriMesh
    heights : ndarray, shape (m, n)
        Sorted signed normal offsets per reference vertex, NaN off the mask.
    mask : ndarray of bool, shape (n,)
    singular_points : ndarray, shape (k, 3)
    eps, R : float
    dropped : list of int
        Vertices removed from the mask because a normal line grazed the
        target.
    """

    reference: object
    heights: np.ndarray
    mask: np.ndarray
    singular_points: np.ndarray
    eps: float
    R: float
    dropped: list = field(default_factory=list)

    @property
    def m(self):
        return self.heights.shape[0]

    def to_dict(self):
        idx = np.flatnonzero(self.mask)
        return {
            "schema_version": 1,
            "sheet_count": int(self.m),
            "mask": idx.tolist(),
            "heights": [h[idx].tolist() for h in self.heights],
            "singular_points": np.asarray(self.singular_points).tolist(),
            "eps": self.eps,
            "R": self.R,
            "dropped": [int(i) for i in self.dropped],
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def sheet_mask(reference, eps, R, singular_points=None):
    """Vertices of ``reference`` in ``B_R(0)`` at distance ``>= eps`` from the singular set."""
    x = reference.vertices
    mask = np.linalg.norm(x, axis=1) < R
    if singular_points is not None and len(singular_points):
        sp = np.atleast_2d(np.asarray(singular_points, dtype=float))
        d = np.linalg.norm(x[:, None, :] - sp[None], axis=2).min(axis=1)
        mask &= d >= eps
    return mask


def decompose_sheets(target, reference, eps, R, singular_points=None, tube=None, graze_cos=1e-3):
    """Write ``target`` as sorted normal graphs over ``reference``.

    Each mask vertex casts its normal line ``x + s n``, ``|s| <= tube``, against
    the target. Hits are sorted into sheet heights. The hit count must agree
    over every connected piece of the mask.

    Parameters
    ----------
    target, reference : TriMesh
    eps : float
        Exclusion radius around ``singular_points``.
    R : float
        Only reference vertices in ``B_R(0)`` are used.
    singular_points : array_like, shape (k, 3), optional
    tube : float, optional
        Half-length of the normal segments. Defaults to ``0.5 / max|A|`` on
        the mask, capped at ``R``.
    graze_cos : float
        Hits with ``|cos(angle)|`` below this are tangential; the vertex is
        dropped from the mask.

    Raises
    ------
    SheetError
        Sheet counts differ between neighboring mask vertices.
    """
    geo = reference.geometry()
    sp = np.zeros((0, 3)) if singular_points is None else np.atleast_2d(np.asarray(singular_points, float))
    mask = sheet_mask(reference, eps, R, sp)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise SheetError("empty mask")
    if tube is None:
        amax = float(np.sqrt(geo.A2[idx].max()))
        tube = min(0.5 / amax, R) if amax > 0 else R
    x = reference.vertices[idx]
    n = geo.normal[idx]
    ray, t, _, cos = line_triangle_hits(target, x, n, -tube, tube)
    grazing = np.zeros(len(idx), dtype=bool)
    grazing[ray[cos < graze_cos]] = True
    order = np.lexsort((t, ray))
    ray, t = ray[order], t[order]
    # merge duplicate hits on shared edges and vertices
    scale = max(target.mean_edge_length(), 1e-300)
    dup = np.r_[False, (ray[1:] == ray[:-1]) & (np.diff(t) < 1e-9 * scale)]
    ray, t = ray[~dup], t[~dup]
    counts = np.bincount(ray, minlength=len(idx))
    dropped = idx[grazing].tolist()
    if dropped:
        logger.info("dropping %d grazing vertices from the mask", len(dropped))
    keep = ~grazing
    mask[idx[grazing]] = False
    _check_counts(reference, idx, counts, keep)
    m = int(counts[keep].max()) if np.any(keep) else 0
    if m == 0:
        raise SheetError("normal lines do not meet the target")
    heights = np.full((m, reference.n_vertices), np.nan)
    starts = np.r_[0, np.cumsum(counts)[:-1]]
    for k in range(m):
        sel = keep & (counts == m)
        heights[k, idx[sel]] = t[starts[sel] + k]
    return SheetBundle(reference=reference, heights=heights, mask=mask, singular_points=sp,
                       eps=float(eps), R=float(R), dropped=dropped)


def _check_counts(mesh, idx, counts, keep):
    """Breadth-first labeling over the mask; counts must propagate unchanged."""
    local = np.full(mesh.n_vertices, -1, dtype=np.int64)
    local[idx[keep]] = np.flatnonzero(keep)
    adj = mesh.adjacency
    seen = np.zeros(len(idx), dtype=bool)
    ref = None
    for start in np.flatnonzero(keep):
        if seen[start]:
            continue
        if ref is None:
            ref = counts[start]
        if counts[start] != ref:
            raise SheetError("inconsistent sheet count at vertex %d: %d sheets, expected %d"
                             % (idx[start], counts[start], ref))
        seen[start] = True
        queue = deque([start])
        while queue:
            a = queue.popleft()
            va = idx[a]
            for vb in adj.indices[adj.indptr[va]:adj.indptr[va + 1]]:
                b = local[vb]
                if b < 0 or seen[b]:
                    continue
                if counts[b] != counts[a]:
                    raise SheetError("inconsistent sheet count at vertex %d: %d sheets, neighbor %d has %d"
                                     % (vb, counts[b], va, counts[a]))
                seen[b] = True
                queue.append(b)


def height_difference(bundle, normalize_at):
    """Top-minus-bottom height ``u`` and its normalization ``w = u / u(x_i)``.

    Raises
    ------
    SheetError
        Fewer than two sheets, or an invalid normalization vertex.
    """
    if bundle.m < 2:
        raise SheetError("height difference needs at least two sheets, got %d" % bundle.m)
    if not bundle.mask[normalize_at]:
        raise SheetError("normalization vertex %d is not in the mask" % normalize_at)
    u = bundle.heights[-1] - bundle.heights[0]
    u0 = u[normalize_at]
    if not u0 > 0:
        raise SheetError("height difference at vertex %d is not positive" % normalize_at)
    w = u / u0
    w[normalize_at] = 1.0
    return u, w


def graph_from_heights(reference, heights):
    """The mesh ``x + u(x) n(x)`` with the connectivity of ``reference``."""
    n = reference.geometry().normal
    return reference.with_vertices(reference.vertices + np.asarray(heights)[:, None] * n)


@dataclass
class MultiplicityResult:
    m: int
    thetas: np.ndarray
    radii: np.ndarray
    confidence: float


def multiplicity_at(meshes, x, radii, tol=0.25):
    """Integer limit of the area ratio ``Area(B_r(x)) / (pi r^2)``.

    The finest mesh of the family stands in for the limit. ``m`` is the
    nearest integer to the ratio at the smallest radius and ``confidence``
    is its distance from that integer.

    Raises
    ------
    MultiplicityError
        The ratio is more than ``tol`` from an integer.
    """
    if not isinstance(meshes, (list, tuple)):
        meshes = [meshes]
    mesh = meshes[-1]
    radii = np.asarray(radii, dtype=float)
    thetas = np.array([area_in_ball(mesh, x, r) / (np.pi * r * r) for r in radii])
    k = int(np.argmin(radii))
    m = int(np.rint(thetas[k]))
    conf = float(abs(thetas[k] - m))
    if conf > tol:
        raise MultiplicityError("multiplicity ill-defined at this resolution: theta=%.3f" % thetas[k])
    return MultiplicityResult(m=m, thetas=thetas, radii=radii, confidence=conf)


# ----------------------------------------------------------------------
# graph geometry
# ----------------------------------------------------------------------
def _sym(S):
    return 0.5 * (S + np.swapaxes(S, 1, 2))


def _shape(geo):
    """Symmetric shape operator with its trace replaced by the cotangent ``H``."""
    S = _sym(geo.shape_operator)
    tr = S[:, 0, 0] + S[:, 1, 1]
    return S + (0.5 * (geo.H - tr))[:, None, None] * np.eye(2)[None]


def _derivatives(reference, u, grad_u, hess_u):
    geo = reference.geometry()
    u = np.asarray(u, dtype=float)
    if np.ndim(u) == 0:
        u = np.full(reference.n_vertices, float(u))
    if grad_u is None or hess_u is None:
        g, h = fit_scalar_derivatives(reference, u, geo)
        grad_u = g if grad_u is None else grad_u
        hess_u = h if hess_u is None else hess_u
    return geo, u, np.asarray(grad_u, float), np.asarray(hess_u, float)


def _offset_operator(S, s, cond_max):
    I = np.eye(2)[None]
    B = I + s[:, None, None] * S
    D = np.linalg.det(B)
    sv = np.linalg.svd(B, compute_uv=False)
    cond = sv[:, 0] / np.maximum(sv[:, 1], 1e-300)
    bad = (D <= 0) | (cond > cond_max)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise SheetError("offset operator B singular at vertex %d (s=%.4g, cond=%.3g)" % (k, s[k], cond[k]))
    return B, D, np.linalg.inv(B)


def graph_quantities(reference, u, grad_u=None, hess_u=None, cond_max=1e6):
    """Area factor ``nu``, normal factor ``w`` and support ``eta`` of a normal graph.

    With ``B = Id + u S`` and ``y = grad u`` in the tangent frame:
    ``w = sqrt(1 + |B^{-1} y|^2)``, ``nu = w det B`` and
    ``eta = (<p, n> + u - <p, B^{-1} y>) / w``.

    Returns
    -------
    w, nu, eta : ndarray, shape (n,)
    """
    geo, u, y, _ = _derivatives(reference, u, grad_u, np.zeros((reference.n_vertices, 2, 2)))
    S = _shape(geo)
    _, D, J = _offset_operator(S, u, cond_max)
    z = np.einsum("nij,nj->ni", J, y)
    w = np.sqrt(1 + np.einsum("ni,ni->n", z, z))
    p = reference.vertices
    pn = np.einsum("ij,ij->i", p, geo.normal)
    pt = np.einsum("nj,naj->na", p, geo.frame)
    eta = (pn + u - np.einsum("na,na->n", pt, z)) / w
    return w, w * D, eta


def _shape_gradient(reference, geo):
    """Tangential derivatives ``d_alpha S`` of the shape operator, shape (n, 2, 2, 2)."""
    F = geo.frame
    T = np.einsum("nai,nab,nbj->nij", F, _shape(geo), F)
    dT = np.empty((reference.n_vertices, 2, 3, 3))
    for i in range(3):
        for j in range(i, 3):
            g, _ = fit_scalar_derivatives(reference, T[:, i, j], geo)
            dT[:, :, i, j] = g
            dT[:, :, j, i] = g
    return np.einsum("nai,nkij,nbj->nkab", F, dT, F)


def mean_curvature_of_graph(reference, u, grad_u=None, hess_u=None, cond_max=1e6):
    """Mean curvature of ``x + u n`` from derivatives of the area factor.

    ``H_u = (w / nu) (d_s nu - d_p d_y nu - (d_s d_y nu) . grad u - (d_y d_y nu) : Hess u)``
    with every derivative of ``nu = w det B`` in closed form.

    Parameters
    ----------
    reference : TriMesh
    u : array_like, shape (n,), or scalar
    grad_u, hess_u : array_like, optional
        Components in the reference tangent frames; fitted when omitted.

    Raises
    ------
    SheetError
        ``B`` singular or with condition number above ``cond_max``.
    """
    geo, s, y, hess = _derivatives(reference, u, grad_u, hess_u)
    S = _shape(geo)
    _, D, J = _offset_operator(S, s, cond_max)
    G = J @ J
    z = np.einsum("nij,nj->ni", J, y)
    w = np.sqrt(1 + np.einsum("ni,ni->n", z, z))
    Gy = np.einsum("nij,nj->ni", G, y)
    JS = J @ S
    dJ_s = -JS @ J
    dD_s = D * np.trace(JS, axis1=1, axis2=2)
    dz_s = np.einsum("nij,nj->ni", dJ_s, y)
    dw_s = np.einsum("ni,ni->n", z, dz_s) / w
    dw_y = Gy / w[:, None]
    dw_yy = G / w[:, None, None] - Gy[:, :, None] * Gy[:, None, :] / w[:, None, None] ** 3
    dG_s = dJ_s @ J + J @ dJ_s
    dw_sy = np.einsum("nij,nj->ni", dG_s, y) / w[:, None] - Gy * (dw_s / w ** 2)[:, None]
    nu = w * D
    dnu_s = dw_s * D + w * dD_s
    dnu_sy = dD_s[:, None] * dw_y + D[:, None] * dw_sy
    dnu_yy = D[:, None, None] * dw_yy
    # d_p d_y nu: only the shape operator depends on p in normal coordinates
    dnu_py = np.zeros_like(s)
    if np.any(y != 0) and np.any(s != 0):
        dS = _shape_gradient(reference, geo)
        for a in range(2):
            dB = s[:, None, None] * dS[:, a]
            dJ = -J @ dB @ J
            dD = D * np.trace(J @ dB, axis1=1, axis2=2)
            dG = dJ @ J + J @ dJ
            dz = np.einsum("nij,nj->ni", dJ, y)
            dw = np.einsum("ni,ni->n", z, dz) / w
            dGy = np.einsum("nij,nj->ni", dG, y)
            dnu_py += (dGy[:, a] * D + Gy[:, a] * dD) / w - Gy[:, a] * D * dw / w ** 2
    bracket = (dnu_s - dnu_py - np.einsum("ni,ni->n", dnu_sy, y)
               - np.einsum("nij,nij->n", dnu_yy, hess))
    return w / nu * bracket


# ----------------------------------------------------------------------
# linearized equation
# ----------------------------------------------------------------------
def tangential_gradient(mesh, u):
    """Vertex gradients (ambient vectors) of a piecewise-linear field.

    Face gradients are averaged with face-area weights, the same weights
    used for vertex normals, then projected to the tangent plane.
    """
    v, f = mesh.vertices, mesh.faces
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    N = np.cross(b - a, c - a)
    dbl = np.einsum("ij,ij->i", N, N)
    ua, ub, uc = u[f[:, 0]], u[f[:, 1]], u[f[:, 2]]
    # grad u on a face: sum_k u_k (N x e_k) / |N|^2 with e_k the opposite edge
    g = (ua[:, None] * np.cross(N, c - b) + ub[:, None] * np.cross(N, a - c)
         + uc[:, None] * np.cross(N, b - a)) / dbl[:, None]
    area = 0.5 * np.sqrt(dbl)
    gv = mesh.vertex_faces @ (area[:, None] * g)
    wsum = mesh.vertex_faces @ area
    gv /= wsum[:, None]
    n = mesh.geometry().normal
    return gv - np.einsum("ij,ij->i", gv, n)[:, None] * n


def interior_mask(mesh, rings=2):
    """Vertices at least ``rings`` edges away from the boundary."""
    bad = mesh.boundary_vertices.copy()
    adj = mesh.adjacency
    for _ in range(rings):
        bad = bad | (adj @ bad.astype(float) > 0)
    return ~bad


def linearized_operator(reference, u):
    """``Delta u - <x, grad u>/2 + |A|^2 u + u/2`` on the reference surface."""
    L, areas = laplacian_operators(reference)
    lap = -(L @ u) / areas
    grad = tangential_gradient(reference, u)
    drift = np.einsum("ij,ij->i", reference.vertices, grad)
    return lap - 0.5 * drift + reference.geometry().A2 * u + 0.5 * u


@dataclass
class LinearizedResidual:
    residual: np.ndarray
    r_norm: float
    u_norm: float
    ratio: float
    frame_ratios: np.ndarray

    def to_csv(self, path, u, w=None):
        n = len(self.residual)
        w = np.full(n, np.nan) if w is None else w
        with open(path, "w") as fh:
            fh.write("vertex,u,w,residual\n")
            for i in range(n):
                fh.write("%d,%.17g,%.17g,%.17g\n" % (i, u[i], w[i], self.residual[i]))


def linearized_residual(reference, u_plus, u_minus, dt, mask=None):
    """Residual of the linearized rescaled flow for ``u = u_plus - u_minus``.

    ``r = d_t u - (Delta u - <x, grad u>/2 + |A|^2 u + u/2)`` with ``d_t`` by
    central differences over the interior frames.

    Parameters
    ----------
    reference : TriMesh
        The shrinker both graphs are written over.
    u_plus, u_minus : array_like, shape (k, n)
        Height traces sampled every ``dt``, ``k >= 3``.
    dt : float
    mask : array_like of bool, optional
        Defaults to vertices two rings away from the boundary.

    Returns
    -------
    LinearizedResidual
        ``ratio`` is ``||r|| / ||u||`` pooled over frames; ``residual`` is
        the field at the last interior frame.

    Raises
    ------
    SheetError
        A height is undefined on the mask in some frame.
    """
    up = np.asarray(u_plus, dtype=float)
    um = np.asarray(u_minus, dtype=float)
    if up.shape != um.shape or up.ndim != 2 or up.shape[0] < 3:
        raise ValueError("traces must have shape (k >= 3, n)")
    mask = interior_mask(reference) if mask is None else np.asarray(mask, dtype=bool)
    u = up - um
    bad = ~np.isfinite(u[:, mask])
    if np.any(bad):
        frame = int(np.flatnonzero(bad.any(axis=1))[0])
        raise SheetError("graph lost validity at frame %d" % frame)
    a = reference.geometry().vertex_area[mask]
    r_sq, u_sq, ratios = 0.0, 0.0, []
    res = np.zeros(reference.n_vertices)
    for j in range(1, len(u) - 1):
        ut = (u[j + 1] - u[j - 1]) / (2 * dt)
        uj = np.where(np.isfinite(u[j]), u[j], 0.0)
        r = ut - linearized_operator(reference, uj)
        rn = float(np.sum(a * r[mask] ** 2))
        un = float(np.sum(a * u[j][mask] ** 2))
        r_sq += rn
        u_sq += un
        ratios.append(np.sqrt(rn / un) if un > 0 else 0.0)
        res = np.where(mask, r, 0.0)
    ratio = np.sqrt(r_sq / u_sq) if u_sq > 0 else 0.0
    return LinearizedResidual(residual=res, r_norm=float(np.sqrt(r_sq)), u_norm=float(np.sqrt(u_sq)),
                              ratio=float(ratio), frame_ratios=np.array(ratios))


def graph_flow_trace(reference, u0, dt, n_steps, mode="rmcf", solver_tol=1e-14):
    """Evolve the graph of ``u0`` and record its heights over ``reference``.

    Returns
    -------
    ndarray, shape (n_steps + 1, n)
    """
    cfg = FlowConfig(mode=mode, dt=dt, dt_policy="fixed", intersect_every=0, solver_tol=solver_tol)
    mesh = graph_from_heights(reference, u0)
    out = [np.asarray(u0, dtype=float).copy()]
    geo = reference.geometry()
    tube = 0.5 / max(float(np.sqrt(geo.A2.max())), 1e-12)
    tube = min(tube, 3 * float(np.abs(u0).max()) + reference.mean_edge_length())
    for k in range(n_steps):
        mesh, _ = step_flow(mesh, cfg, t=k * dt, dt=dt)
        b = decompose_sheets(mesh, reference, eps=0.0, R=np.inf, tube=tube)
        h = b.heights[0]
        # the fixed boundary keeps its initial heights
        h = np.where(np.isfinite(h), h, out[-1])
        out.append(h)
    return np.array(out)


# ----------------------------------------------------------------------
# projection bound
# ----------------------------------------------------------------------
@dataclass
class ProjectionResult:
    worst: float
    worst_stretch: float
    samples: int
    ok: bool


def c1_norm(mesh, u, mask=None):
    """``sup |u| + sup |grad u|`` with piecewise-linear gradients."""
    g = np.linalg.norm(tangential_gradient(mesh, u), axis=1)
    if mask is not None:
        u, g = u[mask], g[mask]
    return float(np.abs(u).max() + g.max())


def projection_bound_check(reference, u1, u2, sample_count=1000, theta_max=np.arctan(3.0),
                           theta_min=0.0, c1_max=0.5, mask=None, seed=0):
    """Monte-Carlo check of ``|GQ| <= 2 |BQ|`` for slanted lines.

    For a sample point ``P`` with normal line meeting the graphs of ``u1`` and
    ``u2`` at ``G`` and ``Q``, the line through ``Q`` at angle ``theta`` to the
    normal meets the graph of ``u1`` at ``B``.

    Returns
    -------
    ProjectionResult
        ``worst`` is the largest ``|GQ| / |BQ|`` (bounded by 2 when the
        check passes); ``worst_stretch`` the largest ``|BQ| / |GQ|``.

    Raises
    ------
    SheetError
        C1 norms above ``c1_max``, or a slanted line that misses sheet 1
        within the local chart.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if mask is None:
        mask = interior_mask(reference, rings=3)
    norm = c1_norm(reference, u1, mask) + c1_norm(reference, u2, mask)
    if norm > c1_max:
        raise SheetError("C1 norms %.3g exceed %.3g" % (norm, c1_max))
    rng = np.random.default_rng(seed)
    geo = reference.geometry()
    cand = np.flatnonzero(mask & (u1 != u2))
    P = rng.choice(cand, size=sample_count)
    theta = rng.uniform(theta_min, theta_max, size=sample_count)
    phi = rng.uniform(0, 2 * np.pi, size=sample_count)
    n = geo.normal[P]
    F = geo.frame[P]
    e = np.cos(phi)[:, None] * F[:, 0] + np.sin(phi)[:, None] * F[:, 1]
    sign = np.sign(u1[P] - u2[P])
    d = (sign * np.cos(theta))[:, None] * n + np.sin(theta)[:, None] * e
    x = reference.vertices[P]
    Q = x + u2[P][:, None] * n
    gq = np.abs(u1[P] - u2[P])
    sheet1 = graph_from_heights(reference, u1)
    tmax = 20 * gq / np.cos(theta) + reference.mean_edge_length()
    ray, t, _, _ = line_triangle_hits(sheet1, Q, d, 1e-12 * gq, tmax)
    bq = np.full(sample_count, np.inf)
    np.minimum.at(bq, ray, t)
    miss = ~np.isfinite(bq)
    if np.any(miss):
        k = int(np.flatnonzero(miss)[0])
        raise SheetError("slanted line from vertex %d misses sheet 1 in the local chart" % P[k])
    ratio = gq / bq
    worst = float(ratio.max())
    return ProjectionResult(worst=worst, worst_stretch=float((bq / gq).max()),
                            samples=int(sample_count), ok=worst <= 2.0)

"""Metric queries on meshes: ball clipping, components, distances, reach."""

import logging

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .trimesh import MeshError

logger = logging.getLogger(__name__)


class QueryError(MeshError):
    """A query precondition failed."""


class CurvaturePreconditionError(QueryError):
    """Curvature exceeds the bound required for a single-valued graph."""


class GraphTestError(QueryError):
    """The surface does not project injectively onto its tangent plane."""


# ----------------------------------------------------------------------
# triangle helpers
# ----------------------------------------------------------------------
def closest_points_on_triangles(p, a, b, c):
    """Closest point on each triangle ``(a, b, c)`` to the point(s) ``p``.

    All inputs broadcast to shape (m, 3).
    """
    p, a, b, c = np.broadcast_arrays(p, a, b, c)
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        out = a + ab * v[:, None] + ac * w[:, None]
        # edge regions
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    conds = [
        ((d1 <= 0) & (d2 <= 0), a),
        ((d3 >= 0) & (d4 <= d3), b),
        ((d6 >= 0) & (d5 <= d6), c),
    ]
    region = np.zeros(len(p), dtype=bool)
    res = out.copy()
    for m, q in conds:
        sel = m & ~region
        res[sel] = q[sel]
        region |= sel
    sel = (vc <= 0) & (d1 >= 0) & (d3 <= 0) & ~region
    res[sel] = a[sel] + t_ab[sel, None] * ab[sel]
    region |= sel
    sel = (vb <= 0) & (d2 >= 0) & (d6 <= 0) & ~region
    res[sel] = a[sel] + t_ac[sel, None] * ac[sel]
    region |= sel
    sel = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0) & ~region
    res[sel] = b[sel] + t_bc[sel, None] * (c[sel] - b[sel])
    return res


def triangle_ball_distance(mesh, center, faces=None):
    """Distance from ``center`` to each face."""
    f = mesh.faces if faces is None else mesh.faces[faces]
    v = mesh.vertices
    q = closest_points_on_triangles(np.asarray(center, float)[None], v[f[:, 0]], v[f[:, 1]], v[f[:, 2]])
    return np.linalg.norm(q - center, axis=1)


def segment_point_distance(a, b, p):
    d = b - a
    t = np.clip(np.einsum("ij,ij->i", p - a, d) / np.maximum(np.einsum("ij,ij->i", d, d), 1e-300), 0, 1)
    return np.linalg.norm(a + t[:, None] * d - p, axis=1)


def triangle_ball_area(a, b, c, center, r):
    """Exact area of each planar triangle inside the ball ``B_r(center)``.

    The ball meets the triangle's plane in a disk; the clipped area is the
    sum over edges of the signed area of the disk intersected with the fan
    triangle from the disk center.
    """
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n, axis=1)
    n = n / nn[:, None]
    dist = np.einsum("ij,ij->i", center - a, n)
    rho2 = r * r - dist * dist
    out = np.zeros(len(a))
    ok = rho2 > 0
    if not np.any(ok):
        return out
    a, b, c, n, dist, rho2 = a[ok], b[ok], c[ok], n[ok], dist[ok], rho2[ok]
    cc = center - dist[:, None] * n
    pts = [a - cc, b - cc, c - cc]
    total = np.zeros(len(a))
    for k in range(3):
        total += _edge_disk_area(pts[k], pts[(k + 1) % 3], rho2, n)
    out[ok] = np.abs(total)
    return out


def _edge_disk_area(A, B, rho2, n):
    D = B - A
    qa = np.einsum("ij,ij->i", D, D)
    qb = 2 * np.einsum("ij,ij->i", A, D)
    qc = np.einsum("ij,ij->i", A, A) - rho2
    disc = qb * qb - 4 * qa * qc
    sq = np.sqrt(np.maximum(disc, 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = np.where(disc > 0, (-qb - sq) / (2 * qa), 1.0)
        s2 = np.where(disc > 0, (-qb + sq) / (2 * qa), 1.0)
    s1 = np.clip(np.nan_to_num(s1, nan=1.0), 0, 1)
    s2 = np.clip(np.nan_to_num(s2, nan=1.0), 0, 1)
    P1 = A + s1[:, None] * D
    P2 = A + s2[:, None] * D

    def sector(P, Q):
        cr = np.einsum("ij,ij->i", np.cross(P, Q), n)
        dt = np.einsum("ij,ij->i", P, Q)
        return 0.5 * rho2 * np.arctan2(cr, dt)

    inside = 0.5 * np.einsum("ij,ij->i", np.cross(P1, P2), n)
    return sector(A, P1) + inside + sector(P2, B)


# ----------------------------------------------------------------------
# public queries
# ----------------------------------------------------------------------
def area_in_ball(mesh, center, r, faces=None):
    """Area of the mesh inside the closed Euclidean ball ``B_r(center)``.

    Faces crossing the sphere are clipped exactly in their own plane.

    Parameters
    ----------
    mesh : TriMesh
    center : array_like, shape (3,)
    r : float
        Radius, must be positive.
    faces : array_like, optional
        Restrict to these face indices.
    """
    if r <= 0:
        raise QueryError("radius must be positive")
    center = np.asarray(center, dtype=float)
    f = mesh.faces if faces is None else mesh.faces[np.asarray(faces)]
    v = mesh.vertices
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    # cheap rejection by bounding sphere of each face
    cen = (a + b + c) / 3
    rad = np.max(np.stack([np.linalg.norm(x - cen, axis=1) for x in (a, b, c)]), axis=0)
    dc = np.linalg.norm(cen - center, axis=1)
    cand = dc < r + rad
    if not np.any(cand):
        return 0.0
    return float(triangle_ball_area(a[cand], b[cand], c[cand], center, r).sum())


def faces_meeting_ball(mesh, center, r):
    """Indices of faces at distance less than ``r`` from ``center``."""
    center = np.asarray(center, dtype=float)
    v = mesh.vertices
    f = mesh.faces
    cen = v[f].mean(axis=1)
    rad = np.linalg.norm(v[f] - cen[:, None], axis=2).max(axis=1)
    cand = np.flatnonzero(np.linalg.norm(cen - center, axis=1) < r + rad)
    if len(cand) == 0:
        return cand
    d = triangle_ball_distance(mesh, center, cand)
    return cand[d < r]


def component_in_ball(mesh, seed, center, r):
    """Faces of the component of ``mesh`` inside ``B_r(center)`` containing ``seed``.

    Two faces are joined when they share an edge that meets the ball.

    Raises
    ------
    QueryError
        The seed vertex lies outside the ball.
    """
    center = np.asarray(center, dtype=float)
    if np.linalg.norm(mesh.vertices[seed] - center) >= r:
        raise QueryError("seed vertex %d lies outside the ball" % seed)
    inside = faces_meeting_ball(mesh, center, r)
    m = mesh.n_faces
    keep = np.zeros(m, dtype=bool)
    keep[inside] = True
    ef = mesh.edge_faces
    v = mesh.vertices
    e = mesh.edges
    both = (ef[:, 1] >= 0) & keep[ef[:, 0]] & keep[np.maximum(ef[:, 1], 0)]
    cand = np.flatnonzero(both)
    de = segment_point_distance(v[e[cand, 0]], v[e[cand, 1]], np.broadcast_to(center, (len(cand), 3)))
    link = cand[de < r]
    g = sparse.csr_matrix((np.ones(len(link)), (ef[link, 0], ef[link, 1])), shape=(m, m))
    _, labels = csgraph.connected_components(g, directed=False)
    seed_faces = mesh.vertex_faces.indices[mesh.vertex_faces.indptr[seed]:mesh.vertex_faces.indptr[seed + 1]]
    seed_faces = seed_faces[keep[seed_faces]]
    comp = np.isin(labels, labels[seed_faces]) & keep
    return np.flatnonzero(comp)


def _steiner_graph(mesh, steiner):
    v = mesh.vertices
    n = mesh.n_vertices
    e = mesh.edges
    ne = len(e)
    pos = [v]
    frac = np.arange(1, steiner + 1) / (steiner + 1)
    for s in frac:
        pos.append((1 - s) * v[e[:, 0]] + s * v[e[:, 1]])
    pos = np.vstack(pos)
    f = mesh.faces
    fe = mesh.face_edges
    nodes = [f[:, 0], f[:, 1], f[:, 2]]
    for k in range(3):
        for j in range(steiner):
            nodes.append(n + j * ne + fe[:, k])
    nodes = np.column_stack(nodes)
    kk = nodes.shape[1]
    ii, jj = np.triu_indices(kk, 1)
    a = nodes[:, ii].ravel()
    b = nodes[:, jj].ravel()
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    key = np.unique(lo * len(pos) + hi)
    lo, hi = key // len(pos), key % len(pos)
    w = np.linalg.norm(pos[lo] - pos[hi], axis=1)
    keep = w > 0
    lo, hi, w = lo[keep], hi[keep], w[keep]
    N = len(pos)
    return sparse.csr_matrix((np.r_[w, w], (np.r_[lo, hi], np.r_[hi, lo])), shape=(N, N))


def intrinsic_distance(mesh, source, targets=None, steiner=2):
    """Geodesic distance along the surface from ``source``.

    Shortest paths run on a graph with ``steiner`` extra points per edge and
    straight segments across faces. ``steiner=0`` is plain edge Dijkstra.

    Parameters
    ----------
    mesh : TriMesh
    source : int or array_like of int
        Source vertex; several sources give the distance to the nearest.
    targets : array_like of int, optional
        Vertices to report; all vertices when omitted.
    steiner : int, default=2

    Returns
    -------
    ndarray
        Distances. Raises :class:`QueryError` when a target is unreachable.
    """
    cache = mesh.__dict__.setdefault("_steiner_cache", {})
    g = cache.get(steiner)
    if g is None:
        g = _steiner_graph(mesh, steiner)
        cache[steiner] = g
    src = np.atleast_1d(source)
    d = csgraph.dijkstra(g, directed=False, indices=src, min_only=True)[:mesh.n_vertices]
    out = d if targets is None else d[np.asarray(targets)]
    if np.any(~np.isfinite(out)):
        raise QueryError("target vertex not connected to the source")
    return out


def _sample_tree(mesh):
    tree = mesh.__dict__.get("_sample_tree")
    if tree is None:
        tree = cKDTree(mesh.vertices)
        mesh.__dict__["_sample_tree"] = tree
    return tree


def reach_estimate(mesh, vertex, cap=None, rel_res=1e-3, both_sides=False):
    """Largest radius of tangent balls on both sides that miss the surface.

    The ball ``B_r(x + s r n)`` is tested against mesh vertices outside the
    one-ring of ``x``, so small errors in the vertex normal do not register
    as hits. The outer side of a closed surface
    (and both sides of an isolated sheet) is bounded by ``cap``.

    Parameters
    ----------
    mesh : TriMesh
    vertex : int
    cap : float, optional
        Domain radius used when a side never hits the surface. Defaults to
        twice the bounding-box diagonal.
    rel_res : float
        Relative bisection resolution.
    both_sides : bool
        Return ``(inner, outer)`` instead of their minimum.
    """
    geo = mesh.geometry()
    x = mesh.vertices[vertex]
    n = geo.normal[vertex]
    if cap is None:
        cap = 2 * np.linalg.norm(np.ptp(mesh.vertices, axis=0))
    tree = _sample_tree(mesh)
    star = np.zeros(mesh.n_vertices, dtype=bool)
    star[vertex] = True
    star[mesh.vertex_neighbors(vertex)] = True

    def empty(r, s):
        idx = tree.query_ball_point(x + s * r * n, r * (1 - 1e-9))
        return not np.any(~star[np.asarray(idx, dtype=np.int64)])

    res = []
    for s in (1.0, -1.0):
        if empty(cap, s):
            res.append(cap)
            continue
        lo, hi = 0.0, cap
        while hi - lo > rel_res * hi:
            mid = 0.5 * (lo + hi)
            if empty(mid, s):
                lo = mid
            else:
                hi = mid
        res.append(0.5 * (lo + hi))
    inner, outer = res[1], res[0]
    if both_sides:
        return inner, outer
    return min(inner, outer)


def graph_radius(mesh, vertex, r0, curvature_tol=0.05):
    """Check that the surface near ``vertex`` is a graph over its tangent plane.

    The precondition bounds the largest principal curvature by ``1 / r0``
    on the component inside ``B_r0``. On the disk of radius ``r0 / 96`` the
    component is projected to the tangent plane; injectivity is checked by
    the orientation of projected faces, and the slope ratio
    ``|grad u| / |x'|`` is measured face by face.

    Returns
    -------
    radius : float
        ``r0 / 96``.
    slope : float
        Measured ``sup |grad u| / |x'|``, to compare with ``36 / r0``.
    """
    geo = mesh.geometry()
    x0 = mesh.vertices[vertex]
    comp = component_in_ball(mesh, vertex, x0, r0)
    cverts = np.unique(mesh.faces[comp])
    kmax = np.abs(geo.principal_curvatures()[cverts]).max()
    if kmax > (1 + curvature_tol) / r0:
        raise CurvaturePreconditionError(
            "max principal curvature %.4g exceeds 1/r0 = %.4g" % (kmax, 1 / r0))
    n = geo.normal[vertex]
    e1, e2 = geo.frame[vertex]
    radius = r0 / 96.0
    f = mesh.faces[comp]
    d = mesh.vertices[f] - x0
    px = np.einsum("fkj,j->fk", d, e1)
    py = np.einsum("fkj,j->fk", d, e2)
    pz = np.einsum("fkj,j->fk", d, n)
    # faces whose projection meets the disk of the graph radius
    cx, cy = px.mean(axis=1), py.mean(axis=1)
    ext = np.sqrt((px - cx[:, None]) ** 2 + (py - cy[:, None]) ** 2).max(axis=1)
    near = np.hypot(cx, cy) < radius + ext
    if not np.any(near):
        raise GraphTestError("no faces over the graph disk")
    px, py, pz = px[near], py[near], pz[near]
    ux, uy = px[:, 1] - px[:, 0], py[:, 1] - py[:, 0]
    vx, vy = px[:, 2] - px[:, 0], py[:, 2] - py[:, 0]
    det = ux * vy - uy * vx
    if np.any(det <= 0):
        raise GraphTestError("projection onto the tangent plane folds over")
    du, dv = pz[:, 1] - pz[:, 0], pz[:, 2] - pz[:, 0]
    gx = (du * vy - dv * uy) / det
    gy = (dv * ux - du * vx) / det
    grad = np.hypot(gx, gy)
    rad = np.hypot(px.mean(axis=1), py.mean(axis=1))
    slope = float(np.max(grad / np.maximum(rad, 1e-300)))
    return radius, slope


def line_triangle_hits(mesh, origins, directions, tmin, tmax, tol=1e-12):
    """Intersections of the segments ``o + t d``, ``t in [tmin, tmax]``, with faces.

    ``directions`` must be unit vectors. Candidate faces come from a KD-tree
    over face centroids.

    Returns
    -------
    ray : ndarray of int
    t : ndarray
        Line parameter of each hit.
    face : ndarray of int
    cosine : ndarray
        ``|<d, face normal>|``, small for grazing hits.
    """
    o = np.atleast_2d(np.asarray(origins, dtype=float))
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    tmin = np.broadcast_to(np.asarray(tmin, dtype=float), (len(o),))
    tmax = np.broadcast_to(np.asarray(tmax, dtype=float), (len(o),))
    tri = mesh.vertices[mesh.faces]
    cache = mesh.__dict__.get("_face_tree")
    if cache is None or cache[0] is not mesh.vertices:
        cen = tri.mean(axis=1)
        cache = (mesh.vertices, cKDTree(cen), np.linalg.norm(tri - cen[:, None], axis=2).max())
        mesh.__dict__["_face_tree"] = cache
    _, tree, max_rad = cache
    mid = o + 0.5 * (tmin + tmax)[:, None] * d
    half = 0.5 * (tmax - tmin)
    ri, fi = [], []
    for k, lst in enumerate(tree.query_ball_point(mid, half + max_rad)):
        ri.append(np.full(len(lst), k, dtype=np.int64))
        fi.append(np.asarray(lst, dtype=np.int64))
    ri = np.concatenate(ri) if ri else np.zeros(0, dtype=np.int64)
    fi = np.concatenate(fi) if fi else np.zeros(0, dtype=np.int64)
    if len(ri) == 0:
        return ri, np.zeros(0), fi, np.zeros(0)
    a, b, c = tri[fi, 0], tri[fi, 1], tri[fi, 2]
    dd = d[ri]
    e1, e2 = b - a, c - a
    p = np.cross(dd, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-300
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o[ri] - a
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    w = np.einsum("ij,ij->i", dd, q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = (ok & (u >= -tol) & (w >= -tol) & (u + w <= 1 + tol)
           & (t >= tmin[ri]) & (t <= tmax[ri]))
    fn = np.cross(e1, e2)
    cos = np.abs(np.einsum("ij,ij->i", dd, fn)) / np.maximum(np.linalg.norm(fn, axis=1), 1e-300)
    return ri[hit], t[hit], fi[hit], cos[hit]

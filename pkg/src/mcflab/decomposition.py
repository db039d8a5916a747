"""High-curvature, thick and thin parts of a ball relative to a surface."""

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .mesh.primitives import _midpoint_subdivide
from .mesh.queries import closest_points_on_triangles

logger = logging.getLogger(__name__)

OUTSIDE, HIGH, THICK, THIN, NEAR_SURFACE = 0, 1, 2, 3, 4
LABEL_NAMES = {OUTSIDE: "outside", HIGH: "high", THICK: "thick", THIN: "thin", NEAR_SURFACE: "near_surface"}


class DecompositionError(ValueError):
    """Invalid decomposition parameters."""


@dataclass
class BallDecomposition:
    """Voxel labeling of ``B_R(0)``.

    Attributes
    ----------
    labels : ndarray of uint8, shape (res, res, res)
        One of ``OUTSIDE, HIGH, THICK, THIN, NEAR_SURFACE`` per voxel.
    spacing : float
        Voxel edge length.
    eps, R : float
    high_vertices : ndarray of int
        The vertex set ``S`` where ``|A| > 1 / eps``.
    """

    labels: np.ndarray
    spacing: float
    eps: float
    R: float
    high_vertices: np.ndarray

    @property
    def voxel_res(self):
        return self.labels.shape[0]

    def volume(self, label):
        return float(np.count_nonzero(self.labels == label) * self.spacing ** 3)

    @property
    def high_volume(self):
        return self.volume(HIGH)

    @property
    def thick_volume(self):
        return self.volume(THICK)

    @property
    def thin_volume(self):
        return self.volume(THIN)

    @property
    def near_volume(self):
        return self.volume(NEAR_SURFACE)

    def summary(self):
        return {
            "schema_version": 1,
            "eps": self.eps,
            "R": self.R,
            "voxel_res": self.voxel_res,
            "spacing": self.spacing,
            "high": self.high_volume,
            "thick": self.thick_volume,
            "thin": self.thin_volume,
            "near_surface": self.near_volume,
            "n_high_vertices": int(len(self.high_vertices)),
        }

    def write(self, grid_path, summary_path=None):
        """Run-length encoded label grid plus an optional JSON summary."""
        flat = self.labels.ravel()
        change = np.flatnonzero(np.diff(flat)) + 1
        starts = np.r_[0, change]
        lengths = np.diff(np.r_[starts, len(flat)])
        with open(grid_path, "w") as fh:
            fh.write("# rle-voxels v1 res=%d spacing=%r R=%r eps=%r\n"
                     % (self.voxel_res, self.spacing, self.R, self.eps))
            for s, n in zip(starts, lengths):
                fh.write("%d %d\n" % (flat[s], n))
        if summary_path:
            with open(summary_path, "w") as fh:
                json.dump(self.summary(), fh, indent=2, sort_keys=True)

    @staticmethod
    def read_labels(grid_path):
        with open(grid_path) as fh:
            header = fh.readline().split()
            res = int([h for h in header if h.startswith("res=")][0][4:])
            vals = np.loadtxt(fh, dtype=np.int64, ndmin=2)
        flat = np.repeat(vals[:, 0], vals[:, 1]).astype(np.uint8)
        return flat.reshape(res, res, res)


def _surface_samples(mesh, spacing):
    v, f = mesh.vertices, mesh.faces
    for _ in range(10):
        e = np.linalg.norm(v[f] - np.roll(v[f], 1, axis=1), axis=2).max()
        if e <= spacing:
            break
        v, f = _midpoint_subdivide(v, f)
    return v


def _exact_distance(mesh, pts, h):
    """Distance to the surface for points known to lie within ``h`` of it."""
    tri = mesh.vertices[mesh.faces]
    cen = tri.mean(axis=1)
    max_rad = np.linalg.norm(tri - cen[:, None], axis=2).max()
    lists = cKDTree(cen).query_ball_point(pts, h + max_rad)
    si = np.repeat(np.arange(len(pts)), [len(x) for x in lists])
    fi = np.fromiter((j for x in lists for j in x), dtype=np.int64, count=len(si))
    out = np.full(len(pts), np.inf)
    if len(si):
        q = closest_points_on_triangles(pts[si], tri[fi, 0], tri[fi, 1], tri[fi, 2])
        np.minimum.at(out, si, np.linalg.norm(q - pts[si], axis=1))
    return out


def _crossing(p0, p1, tri_tree, tri, max_rad):
    """True where the segment ``p0 -> p1`` crosses a triangle."""
    mid = 0.5 * (p0 + p1)
    half = 0.5 * np.linalg.norm(p1 - p0, axis=1).max()
    lists = tri_tree.query_ball_point(mid, half + max_rad)
    si = np.repeat(np.arange(len(mid)), [len(x) for x in lists])
    fi = np.fromiter((j for x in lists for j in x), dtype=np.int64, count=len(si))
    out = np.zeros(len(mid), dtype=bool)
    if len(si) == 0:
        return out
    o = p0[si]
    d = p1[si] - o
    a, b, c = tri[fi, 0], tri[fi, 1], tri[fi, 2]
    e1, e2 = b - a, c - a
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-300
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o - a
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    w = np.einsum("ij,ij->i", d, q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    tol = 1e-12
    hit = ok & (u >= -tol) & (w >= -tol) & (u + w <= 1 + tol) & (t >= -tol) & (t <= 1 + tol)
    np.logical_or.at(out, si[hit], True)
    return out


def decompose(mesh, eps, R, voxel_res=64, high_vertices=None):
    """Label the voxels of ``B_R(0)`` as high-curvature, thick or thin.

    ``S`` collects vertices in ``B_R`` with ``|A| > 1/eps``. High voxels lie
    within ``eps/2`` of ``S``. Thick voxels are joined, by 6-connected steps
    that avoid high voxels and do not cross the surface, to a seed voxel
    ``y`` whose ball of radius ``eps - d`` (``d`` the voxel diagonal) stays
    inside ``B_R`` and away from the high set and the surface. The rest of
    the ball is thin. The surface is treated as a measure-zero barrier:
    a voxel is only labeled near-surface when its center lies on it.

    Parameters
    ----------
    mesh : TriMesh
    eps : float
    R : float
    voxel_res : int
        Voxels per axis, at least 32.
    high_vertices : array_like of int, optional
        Override for ``S``.

    Raises
    ------
    DecompositionError
        Invalid parameters, or ``eps`` below two voxel diagonals.
    """
    if eps <= 0 or R <= 0:
        raise DecompositionError("eps and R must be positive")
    if voxel_res < 32:
        raise DecompositionError("voxel_res must be at least 32")
    h = 2.0 * R / voxel_res
    diag = h * np.sqrt(3)
    if eps < 2 * diag:
        raise DecompositionError(
            "voxel resolution too coarse: eps=%.3g < 2 voxel diagonals (%.3g)" % (eps, 2 * diag))
    ax = -R + h * (np.arange(voxel_res) + 0.5)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    centers = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    rad = np.linalg.norm(centers, axis=1)
    inball = rad < R
    labels = np.zeros(len(centers), dtype=np.uint8)

    geo = mesh.geometry()
    if high_vertices is None:
        vin = np.linalg.norm(mesh.vertices, axis=1) < R
        high_vertices = np.flatnonzero(vin & (np.sqrt(geo.A2) > 1.0 / eps))
    high_vertices = np.asarray(high_vertices, dtype=np.int64)
    d_high = np.full(len(centers), np.inf)
    if len(high_vertices):
        d_high, _ = cKDTree(mesh.vertices[high_vertices]).query(centers)
    is_high = inball & (d_high < eps / 2)

    samples = _surface_samples(mesh, h / 4)
    d_surf, _ = cKDTree(samples).query(centers, distance_upper_bound=eps + 2 * diag)
    d_surf = d_surf - h / 4
    close = np.flatnonzero(inball & (d_surf < h))
    if len(close):
        d_surf[close] = _exact_distance(mesh, centers[close], h)
    near = inball & (d_surf < 1e-9 * h)

    free = inball & ~is_high & ~near
    clearance = eps - diag
    seed = free & (d_surf >= clearance) & (d_high - eps / 2 >= clearance) & (rad + clearance <= R)

    # 6-neighbour links between free voxels that do not cross the surface
    idx = np.arange(len(centers)).reshape(voxel_res, voxel_res, voxel_res)
    tri = mesh.vertices[mesh.faces]
    cen = tri.mean(axis=1)
    max_rad = np.linalg.norm(tri - cen[:, None], axis=2).max()
    tri_tree = cKDTree(cen)
    rows, cols = [], []
    for axis in range(3):
        a = np.take(idx, np.arange(voxel_res - 1), axis=axis).ravel()
        b = np.take(idx, np.arange(1, voxel_res), axis=axis).ravel()
        ok = free[a] & free[b]
        a, b = a[ok], b[ok]
        risky = (d_surf[a] < h) | (d_surf[b] < h)
        if np.any(risky):
            cross = _crossing(centers[a[risky]], centers[b[risky]], tri_tree, tri, max_rad)
            keep = np.ones(len(a), dtype=bool)
            keep[np.flatnonzero(risky)[cross]] = False
            a, b = a[keep], b[keep]
        rows.append(a)
        cols.append(b)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    n = len(centers)
    g = sparse.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    _, comp = csgraph.connected_components(g, directed=False)
    seeded = np.zeros(comp.max() + 1, dtype=bool)
    seeded[comp[seed]] = True
    thick = free & seeded[comp]

    labels[inball] = THIN
    labels[thick] = THICK
    labels[is_high] = HIGH
    labels[near] = NEAR_SURFACE
    return BallDecomposition(labels=labels.reshape(voxel_res, voxel_res, voxel_res), spacing=h,
                             eps=float(eps), R=float(R), high_vertices=high_vertices)


def f_of_t(times, thin_volumes, t, tau):
    """``inf`` of the thin volume over the window ``[t - tau, t]``.

    The samples are treated as a piecewise-constant function, each value
    holding until the next sample time.
    """
    times = np.asarray(times, dtype=float)
    vals = np.asarray(thin_volumes, dtype=float)
    order = np.argsort(times)
    times, vals = times[order], vals[order]
    if times[0] > t - tau + 1e-12 or times[-1] < t - 1e-12:
        raise ValueError("samples do not cover the window [%g, %g]" % (t - tau, t))
    # the sample active at t - tau is the last one at or before it
    first = np.searchsorted(times, t - tau + 1e-12, side="right") - 1
    last = np.searchsorted(times, t + 1e-12, side="right") - 1
    return float(vals[max(first, 0):last + 1].min())


@dataclass
class Selection:
    times: list
    complete: bool
    message: str = ""


def select_times(f, t0, l, count, times=None, restart_gap=1.0):
    """Doubling search for times whose windows carry no large spikes.

    The first start is the first sample after ``t0 + l`` with ``f > 0``.
    From a start ``s``, scan ``[s, s + l]``; if some sample ``t`` has
    ``f(t) > 2 f(s)`` move ``s`` to the first such ``t`` and scan again.
    Otherwise ``s`` is selected and the search restarts at
    ``s + l + restart_gap``.

    Parameters
    ----------
    f : callable or array_like
        Function of time, or values at ``times``.
    t0 : float
        Start of the search.
    l : float
        Window length.
    count : int
        Number of times wanted.
    times : array_like, optional
        Sample times. Required when ``f`` is an array.
    restart_gap : float
        Offset added after each window.

    Returns
    -------
    Selection
        ``complete`` is False when the horizon is exhausted first.
    """
    if times is None:
        raise ValueError("sample times are required")
    times = np.asarray(times, dtype=float)
    vals = np.asarray(f(times) if callable(f) else f, dtype=float)
    if np.any(vals < 0):
        raise ValueError("f must be nonnegative")
    order = np.argsort(times)
    times, vals = times[order], vals[order]
    out = []
    i = int(np.searchsorted(times, t0 + l, side="right"))
    while len(out) < count:
        while i < len(times) and vals[i] <= 0:
            i += 1
        if i >= len(times):
            msg = "no positive start found" if not out else "horizon exhausted"
            return Selection(out, False, msg)
        while True:
            s = times[i]
            j = int(np.searchsorted(times, s + l, side="right"))
            if j > len(times) or s + l > times[-1] + 1e-12:
                return Selection(out, False, "horizon exhausted")
            window = vals[i:j]
            bad = np.flatnonzero(window > 2 * vals[i])
            if len(bad) == 0:
                break
            i = i + int(bad[0])
        out.append(float(s))
        i = int(np.searchsorted(times, s + l + restart_gap, side="left"))
    return Selection(out, True)


def window_property_holds(times, vals, selected, l):
    """Check ``max_{[t_i, t_i + l]} f <= 2 f(t_i)`` on the samples."""
    times = np.asarray(times, dtype=float)
    vals = np.asarray(vals, dtype=float)
    for s in selected:
        k = int(np.flatnonzero(times == s)[0])
        win = (times >= s) & (times <= s + l)
        if vals[win].max() > 2 * vals[k]:
            return False
    return True

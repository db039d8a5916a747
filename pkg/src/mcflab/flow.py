"""Mean curvature flow and rescaled mean curvature flow on triangle meshes."""

import configparser
import csv
import logging
import os
import time
from ast import literal_eval
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg
from scipy.spatial import cKDTree

from .mesh.geometry import laplacian_operators, mean_curvature_vector, vertex_normals
from .mesh.io import write_obj
from .mesh.trimesh import TriMesh
from .shrinker import f_functional, residual_field

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("t", "maxH", "maxA", "area", "F", "typeI", "resL2", "resSup", "nverts")


class FlowError(RuntimeError):
    """A time step could not be completed."""


class CFLViolation(FlowError):
    """Explicit step larger than the stability limit."""


class SelfIntersectionError(FlowError):
    """The evolving surface intersects itself."""


class NoBlowupError(ValueError):
    """The trace does not approach a singularity."""


@dataclass
class FlowConfig:
    """Integrator settings.

    Attributes
    ----------
    mode : {"mcf", "rmcf"}
    dt : float
        Step for the fixed policy.
    dt_policy : {"fixed", "cfl", "curvature"}
        ``cfl`` uses ``dt = cfl * h_min^2 / 4`` each step; ``curvature``
        uses ``min(dt, cfl / max|H|^2)`` so steps shrink with the surface.
    cfl : float
        Safety factor in ``(0, 1]``.
    scheme : {"semi_implicit", "explicit"}
    remesh : bool
    remesh_min, remesh_max : float
        Edge-length thresholds as multiples of the initial mean edge.
    max_time, max_steps : float, int
    max_curvature : float
        Stop once ``max |A|`` exceeds this value.
    min_area : float
        Stop once the area drops below this fraction of the initial area.
    trace_every : int
        Record a trace sample every this many steps.
    checkpoint_every : int
        Keep a mesh snapshot every this many steps (0 disables).
    intersect_every : int
        Self-intersection check cadence (0 disables).
    intersect_action : {"warn", "error"}
    f_center, f_scale : tuple, float
        Center and scale of the F-functional recorded in the trace.
    """

    mode: str = "mcf"
    dt: float = 1e-4
    dt_policy: str = "fixed"
    cfl: float = 0.5
    scheme: str = "semi_implicit"
    remesh: bool = False
    remesh_min: float = 0.8
    remesh_max: float = 4.0 / 3.0
    max_time: float = 1.0
    max_steps: int = 100000
    max_curvature: float = 1e4
    min_area: float = 1e-4
    trace_every: int = 1
    checkpoint_every: int = 0
    intersect_every: int = 10
    intersect_action: str = "warn"
    f_center: tuple = (0.0, 0.0, 0.0)
    f_scale: float = 1.0
    solver_tol: float = 1e-10

    def __post_init__(self):
        self.mode = self.mode.lower()
        if self.mode not in ("mcf", "rmcf"):
            raise ValueError("mode must be mcf or rmcf")
        if self.scheme not in ("semi_implicit", "explicit"):
            raise ValueError("scheme must be semi_implicit or explicit")
        if self.dt_policy not in ("fixed", "cfl", "curvature"):
            raise ValueError("dt_policy must be fixed, cfl or curvature")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl safety factor must lie in (0, 1]")
        if not self.remesh_min < self.remesh_max:
            raise ValueError("remesh_min must be below remesh_max")
        self.f_center = tuple(float(c) for c in self.f_center)

    _KEYS = {
        "mode": "mode", "dt": "dt", "dt_policy": "dt_policy", "cfl": "cfl", "scheme": "scheme",
        "remesh": "remesh", "remesh.min": "remesh_min", "remesh.max": "remesh_max",
        "stop.time": "max_time", "stop.steps": "max_steps", "stop.curvature": "max_curvature",
        "stop.area": "min_area", "trace_every": "trace_every", "checkpoint_every": "checkpoint_every",
        "intersect.every": "intersect_every", "intersect.action": "intersect_action",
        "f.center": "f_center", "f.scale": "f_scale",
    }

    @classmethod
    def from_mapping(cls, mapping):
        kw = {}
        for key, value in mapping.items():
            name = cls._KEYS.get(key, key if key in {f.name for f in fields(cls)} else None)
            if name is None:
                raise KeyError("unknown flow config key %r" % key)
            kw[name] = value
        return cls(**kw)

    def to_mapping(self):
        inv = {v: k for k, v in self._KEYS.items()}
        return {inv.get(f.name, f.name): getattr(self, f.name) for f in fields(self)}


def parse_config_text(text):
    """Parse ``key = value`` lines (``#`` comments) into a dict.

    Values are read as Python literals when possible, otherwise as strings.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    cp.read_string("[config]\n" + text)
    out = {}
    for k, v in cp.items("config"):
        v = v.strip().strip('"').strip("'")
        if v.lower() in ("true", "false"):
            out[k] = v.lower() == "true"
            continue
        try:
            out[k] = literal_eval(v)
        except (ValueError, SyntaxError):
            out[k] = v
    return out


def load_config(path, overrides=None):
    with open(path) as fh:
        mapping = parse_config_text(fh.read())
    mapping.update(overrides or {})
    return FlowConfig.from_mapping(mapping)


@dataclass
class FlowTrace:
    """Per-sample diagnostics of a flow run."""

    records: list = field(default_factory=list)
    reason: str = ""
    checkpoints: list = field(default_factory=list)

    def append(self, rec):
        if self.records and rec["t"] <= self.records[-1]["t"]:
            raise ValueError("trace times must increase")
        self.records.append(rec)

    def column(self, name):
        return np.array([r[name] for r in self.records], dtype=float)

    def __len__(self):
        return len(self.records)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                w.writerow([repr(float(r[c])) if c != "nverts" else int(r[c]) for c in TRACE_COLUMNS])

    @classmethod
    def from_csv(cls, path):
        tr = cls()
        with open(path) as fh:
            for row in csv.DictReader(fh):
                tr.records.append({k: float(v) for k, v in row.items()})
        return tr


# ----------------------------------------------------------------------
# stepping
# ----------------------------------------------------------------------
def _solve_spd(A, B, X0, tol):
    out = np.empty_like(B)
    d = A.diagonal()
    pre = sparse.diags(1.0 / d)
    for k in range(B.shape[1]):
        x, info = cg(A, B[:, k], x0=X0[:, k], rtol=tol, atol=0.0, M=pre, maxiter=5000)
        if info != 0:
            raise FlowError("linear solver did not converge (info=%d)" % info)
        out[:, k] = x
    return out


def step_flow(mesh, config, t=0.0, dt=None, dt_cap=None):
    """Advance the surface by one time step.

    The velocity is normal: ``-H n`` for MCF and ``-(H - <x, n>/2) n`` for the
    rescaled flow. The semi-implicit scheme solves
    ``(M + dt L) x' = M (x + dt f)`` where ``f`` is the explicit reaction
    term of the rescaled flow, then keeps only the normal part of
    ``x' - x``.

    Parameters
    ----------
    mesh : TriMesh
    config : FlowConfig
    t : float
        Current time (recorded only).
    dt : float, optional
        Step size; chosen by ``config.dt_policy`` when omitted.
    dt_cap : float, optional
        Upper bound applied to the policy step.

    Returns
    -------
    TriMesh
        The advanced mesh (same connectivity unless remeshed).
    dict
        ``dt`` used and the maximum normal displacement.
    """
    x = mesh.vertices
    L, areas = laplacian_operators(mesh)
    if dt is None:
        dt = _choose_dt(mesh, config, L, areas)
        if dt_cap is not None:
            dt = min(dt, dt_cap)
    n = vertex_normals(mesh)
    react = np.zeros_like(x)
    if config.mode == "rmcf":
        react = 0.5 * np.einsum("ij,ij->i", x, n)[:, None] * n
    if config.scheme == "explicit":
        hmin = float(mesh.edge_lengths().min())
        if dt > config.cfl * hmin ** 2 / 4 * (1 + 1e-12):
            raise CFLViolation("dt=%.3g exceeds cfl*h_min^2/4=%.3g" % (dt, config.cfl * hmin ** 2 / 4))
        hn = (L @ x) / areas[:, None]
        x_new = x + dt * (react - hn)
    else:
        A = (sparse.diags(areas) + dt * L).tocsr()
        B = areas[:, None] * (x + dt * react)
        x_new = _solve_spd(A, B, x, config.solver_tol)
    disp = np.einsum("ij,ij->i", x_new - x, n)
    if mesh.boundary_vertices.any():
        disp[mesh.boundary_vertices] = 0.0
    new = mesh.with_vertices(x + disp[:, None] * n)
    if config.remesh:
        new = remesh(new, config._target_edge, config.remesh_min, config.remesh_max)
    return new, {"dt": dt, "max_disp": float(np.abs(disp).max())}


def _choose_dt(mesh, config, L=None, areas=None):
    if config.dt_policy == "cfl":
        hmin = float(mesh.edge_lengths().min())
        return config.cfl * hmin ** 2 / 4
    if config.dt_policy == "curvature":
        hn = mean_curvature_vector(mesh, L, areas)
        h2 = float(np.einsum("ij,ij->i", hn, hn).max())
        return min(config.dt, config.cfl / h2) if h2 > 0 else config.dt
    return config.dt


def _diagnostics(mesh, t, config, T_hat):
    geo = mesh.geometry()
    maxH = float(np.abs(geo.H).max())
    rec = {
        "t": float(t),
        "maxH": maxH,
        "maxA": float(np.sqrt(geo.A2.max())),
        "area": mesh.area(),
        "F": f_functional(mesh, config.f_center, config.f_scale),
        "typeI": float(np.sqrt(T_hat - t) * maxH) if T_hat is not None and T_hat > t else float("nan"),
        "nverts": mesh.n_vertices,
    }
    if config.mode == "rmcf":
        r = residual_field(mesh)
    elif T_hat is not None and T_hat > t:
        r = residual_field(mesh, T_hat - t, x0=config.f_center)
    else:
        r = None
    if r is None:
        rec["resL2"] = rec["resSup"] = float("nan")
    else:
        rec["resL2"] = float(np.sqrt(np.sum(geo.vertex_area * r * r)))
        rec["resSup"] = float(np.abs(r).max())
    return rec


def run_flow(mesh, config, t0=0.0, checkpoint_dir=None, callback=None):
    """Integrate until a stop criterion fires.

    Records a :class:`FlowTrace` sample every ``config.trace_every`` steps.
    In MCF mode the type-I ratio and generalized residual use the running
    extinction estimate once enough samples exist.

    Parameters
    ----------
    mesh : TriMesh
    config : FlowConfig
    t0 : float
    checkpoint_dir : str, optional
        Write OBJ checkpoints here at ``config.checkpoint_every``.
    callback : callable, optional
        Called as ``callback(step, t, mesh, info)`` after every step.

    Returns
    -------
    FlowTrace
    """
    config._target_edge = mesh.mean_edge_length()
    trace = FlowTrace()
    area0 = mesh.area()
    t = float(t0)
    T_hat = None
    trace.append(_diagnostics(mesh, t, config, T_hat))
    if config.checkpoint_every:
        trace.checkpoints.append((t, mesh))
    step = 0
    wall = time.perf_counter()
    while True:
        if t >= config.max_time - 1e-12:
            trace.reason = "max_time"
            break
        if step >= config.max_steps:
            trace.reason = "max_steps"
            break
        mesh, info = step_flow(mesh, config, t, dt_cap=config.max_time - t)
        t += info["dt"]
        step += 1
        if callback is not None:
            callback(step, t, mesh, info)
        if config.intersect_every and step % config.intersect_every == 0:
            hits = self_intersections(mesh)
            if hits:
                msg = "self-intersection detected at t=%.6g (%d segment hits)" % (t, hits)
                if config.intersect_action == "error":
                    raise SelfIntersectionError(msg)
                logger.warning(msg)
        area = mesh.area()
        stop = None
        if area < config.min_area * area0:
            stop = "min_area"
        if step % config.trace_every == 0 or stop:
            if config.mode == "mcf" and len(trace) >= 10:
                try:
                    T_hat = estimate_extinction(trace)[0]
                except NoBlowupError:
                    T_hat = None
            rec = _diagnostics(mesh, t, config, T_hat)
            trace.append(rec)
            if rec["maxA"] > config.max_curvature:
                stop = stop or "max_curvature"
        if config.checkpoint_every and step % config.checkpoint_every == 0:
            trace.checkpoints.append((t, mesh))
            if checkpoint_dir:
                write_obj(mesh, os.path.join(checkpoint_dir, "checkpoint_%06d.obj" % step))
        if stop:
            trace.reason = stop
            break
    logger.info("flow stopped (%s) at t=%.6g after %d steps in %.1fs",
                trace.reason, t, step, time.perf_counter() - wall)
    trace.final_mesh = mesh
    return trace


# ----------------------------------------------------------------------
# extinction and rescaling
# ----------------------------------------------------------------------
def estimate_extinction(trace, tail=0.3, t=None, maxH=None):
    """Fit ``1 / max|H|^2 = (T - t) / Lambda^2`` on the tail of a trace.

    Parameters
    ----------
    trace : FlowTrace or None
        Source of ``t`` and ``maxH`` unless given explicitly.
    tail : float
        Fraction of samples at the end used in the fit.

    Returns
    -------
    T_hat : float
    Lambda_hat : float
    residual : float
        RMS misfit of the linear fit.

    Raises
    ------
    NoBlowupError
        Fewer than 10 samples, or curvature not increasing in the tail.
    """
    if trace is not None:
        t, maxH = trace.column("t"), trace.column("maxH")
    t = np.asarray(t, dtype=float)
    maxH = np.asarray(maxH, dtype=float)
    if len(t) < 10:
        raise NoBlowupError("need at least 10 samples, got %d" % len(t))
    k = max(3, int(np.ceil(tail * len(t))))
    tt, hh = t[-k:], maxH[-k:]
    if np.any(np.diff(hh) <= 0):
        raise NoBlowupError("no blowup detected: max|H| is not increasing in the fit window")
    y = 1.0 / hh ** 2
    slope, icpt = np.polyfit(tt, y, 1)
    if slope >= 0:
        raise NoBlowupError("no blowup detected: 1/max|H|^2 does not decrease")
    resid = float(np.sqrt(np.mean((icpt + slope * tt - y) ** 2)))
    return float(-icpt / slope), float(1.0 / np.sqrt(-slope)), resid


def tangent_rescale(mesh, x0, T, t, c):
    """Parabolic rescaling ``x -> c (x - x0)``.

    The matching rescaled time is ``c^2 (t - T)``, returned alongside the mesh.
    """
    if c <= 0:
        raise ValueError("scale c must be positive")
    return mesh.with_vertices(c * (mesh.vertices - np.asarray(x0, dtype=float))), c * c * (t - T)


def time_reparametrize(t, direction, t_ref=0.0):
    """Convert between rescaled-flow time and the compressed time ``s``.

    ``mcf_to_rmcf`` maps ``t -> s = 1 - exp(-(t - t_ref))`` and returns the
    spatial factor ``sqrt(1 - s)``. ``rmcf_to_mcf`` inverts it, returning
    ``t = t_ref - log(1 - s)`` and the factor ``1 / sqrt(1 - s)``.
    """
    if direction == "mcf_to_rmcf":
        s = -np.expm1(-(t - t_ref))
        return float(s), float(np.sqrt(1 - s))
    if direction == "rmcf_to_mcf":
        s = t
        if s >= 1:
            raise ValueError("s must be below 1")
        return float(t_ref - np.log1p(-s)), float(1 / np.sqrt(1 - s))
    raise ValueError("unknown direction %r" % direction)


# ----------------------------------------------------------------------
# self-intersection test
# ----------------------------------------------------------------------
def self_intersections(mesh):
    """Count edge/face crossings between non-adjacent elements."""
    v = mesh.vertices
    f = mesh.faces
    e = mesh.edges
    cen = v[f].mean(axis=1)
    frad = np.linalg.norm(v[f] - cen[:, None], axis=2).max(axis=1)
    mid = 0.5 * (v[e[:, 0]] + v[e[:, 1]])
    half = 0.5 * np.linalg.norm(v[e[:, 1]] - v[e[:, 0]], axis=1)
    tree = cKDTree(cen)
    lists = tree.query_ball_point(mid, half + frad.max())
    ei = np.repeat(np.arange(len(e)), [len(x) for x in lists])
    fi = np.fromiter((j for x in lists for j in x), dtype=np.int64, count=len(ei))
    share = np.zeros(len(ei), dtype=bool)
    for k in range(3):
        share |= (f[fi, k] == e[ei, 0]) | (f[fi, k] == e[ei, 1])
    ei, fi = ei[~share], fi[~share]
    if len(ei) == 0:
        return 0
    o = v[e[ei, 0]]
    d = v[e[ei, 1]] - o
    a, b, c = v[f[fi, 0]], v[f[fi, 1]], v[f[fi, 2]]
    e1, e2 = b - a, c - a
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-300
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o - a
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    w = np.einsum("ij,ij->i", d, q) * inv
    tt = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u > 0) & (w > 0) & (u + w < 1) & (tt > 0) & (tt < 1)
    return int(hit.sum())


# ----------------------------------------------------------------------
# isotropic remeshing
# ----------------------------------------------------------------------
def remesh(mesh, target, lo=0.8, hi=4.0 / 3.0, smooth=0.5):
    """Split long edges, collapse short ones, then smooth tangentially.

    Edges above ``hi * target`` are split at their midpoint and edges below
    ``lo * target`` are collapsed when the link condition holds and no edge
    longer than ``hi * target`` would be created. A single tangential
    Laplacian pass finishes the cycle. Topology is preserved.
    """
    v = mesh.vertices.copy()
    f = mesh.faces.copy()
    changed = False
    for _ in range(10):
        v, f, ns = _split_long(v, f, hi * target)
        changed |= ns > 0
        if ns == 0:
            break
    v, f, nc = _collapse_short(v, f, lo * target, hi * target)
    changed |= nc > 0
    if not changed:
        return mesh
    out = TriMesh(v, f, validate=False)
    if smooth:
        n = vertex_normals(out)
        a = out.adjacency
        deg = np.asarray(a.sum(axis=1)).ravel()
        avg = (a @ out.vertices) / deg[:, None]
        d = avg - out.vertices
        d -= np.einsum("ij,ij->i", d, n)[:, None] * n
        d[out.boundary_vertices] = 0
        out = out.with_vertices(out.vertices + smooth * d)
    return out


def _split_long(v, f, lmax):
    m = len(f)
    ends = np.stack([f, np.roll(f, -1, axis=1)], axis=2)  # (m, 3, 2)
    lens = np.linalg.norm(v[ends[..., 1]] - v[ends[..., 0]], axis=2)
    # each face splits at most its longest edge, processed longest first
    k = np.argmax(lens, axis=1)
    lmaxf = lens[np.arange(m), k]
    order = np.argsort(-lmaxf)
    order = order[lmaxf[order] > lmax]
    if len(order) == 0:
        return v, f, 0
    nv = len(v)
    key_of = lambda a, b: (min(a, b), max(a, b))
    he = {}
    for fi in range(m):
        for j in range(3):
            he[(f[fi, j], f[fi, (j + 1) % 3])] = fi
    locked = np.zeros(m, dtype=bool)
    new_v = []
    new_f = []
    drop = np.zeros(m, dtype=bool)
    for fi in order:
        if locked[fi]:
            continue
        j = k[fi]
        a, b = f[fi, j], f[fi, (j + 1) % 3]
        other = he.get((b, a), -1)
        if other >= 0 and locked[other]:
            continue
        mid = nv + len(new_v)
        new_v.append(0.5 * (v[a] + v[b]))
        for face in ([fi] if other < 0 else [fi, other]):
            locked[face] = True
            drop[face] = True
            tri = list(f[face])
            jj = [x for x in range(3) if {tri[x], tri[(x + 1) % 3]} == {a, b}][0]
            p, q, r = tri[jj], tri[(jj + 1) % 3], tri[(jj + 2) % 3]
            new_f.append([p, mid, r])
            new_f.append([mid, q, r])
    v = np.vstack([v, np.array(new_v)])
    f = np.vstack([f[~drop], np.array(new_f, dtype=np.int64)])
    return v, f, len(new_v)


def _collapse_short(v, f, lmin, lmax):
    tm = TriMesh(v, f, validate=False)
    e = tm.edges
    lens = tm.edge_lengths()
    cand = np.flatnonzero(lens < lmin)
    if len(cand) == 0:
        return v, f, 0
    cand = cand[np.argsort(lens[cand])]
    adj = tm.adjacency.tolil().rows
    nbrs = [set(r) for r in adj]
    alive = np.ones(len(v), dtype=bool)
    touched = np.zeros(len(v), dtype=bool)
    target = np.arange(len(v))
    pos = v.copy()
    count = 0
    bnd = tm.boundary_vertices
    for ei in cand:
        a, b = e[ei]
        if touched[a] or touched[b] or bnd[a] or bnd[b]:
            continue
        common = nbrs[a] & nbrs[b]
        if len(common) != 2:
            continue
        m = 0.5 * (pos[a] + pos[b])
        ring = (nbrs[a] | nbrs[b]) - {a, b}
        if any(np.linalg.norm(pos[r] - m) > lmax for r in ring):
            continue
        if len(nbrs[a]) + len(nbrs[b]) - 4 < 3:
            continue
        pos[a] = m
        alive[b] = False
        target[b] = a
        for r in ring | {a}:
            touched[r] = True
        touched[b] = True
        for r in nbrs[b]:
            if r != a:
                nbrs[r].discard(b)
                nbrs[r].add(a)
        nbrs[a] = (nbrs[a] | nbrs[b]) - {a, b}
        count += 1
    if count == 0:
        return v, f, 0
    f2 = target[f]
    keep = (f2[:, 0] != f2[:, 1]) & (f2[:, 1] != f2[:, 2]) & (f2[:, 0] != f2[:, 2])
    f2 = f2[keep]
    used = np.flatnonzero(alive)
    remap = np.full(len(v), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return pos[used], remap[f2], count

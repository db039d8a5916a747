"""Triangle mesh container with half-edge adjacency."""

import logging
from collections import deque

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

logger = logging.getLogger(__name__)


class MeshError(ValueError):
    """Base class for mesh validation failures."""


class NonManifoldError(MeshError):
    """An edge is shared by more than two faces."""


class NonOrientableError(MeshError):
    """No consistent face orientation exists."""


class MultiComponentError(MeshError):
    """The mesh has more than one connected component."""


class IsolatedVertexError(MeshError):
    """A vertex is not referenced by any face."""


class TriMesh:
    """Oriented triangle mesh in R^3.

    Topology tables are built once at construction and shared by meshes
    produced with :meth:`with_vertices`, so a flow can move vertices without
    rebuilding adjacency.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
        Vertex positions.
    faces : array_like, shape (m, 3)
        Vertex indices of each triangle.
    validate : bool, default=True
        Check manifoldness and repair orientation when possible.
    allow_multi : bool, default=False
        Accept meshes with several connected components.

    Attributes
    ----------
    vertices : ndarray, shape (n, 3)
    faces : ndarray, shape (m, 3)
    edges : ndarray, shape (e, 2)
        Unique undirected edges with ``edges[:, 0] < edges[:, 1]``.
    face_edges : ndarray, shape (m, 3)
        Edge index of the half-edge ``faces[f, k] -> faces[f, k+1]``.
    edge_faces : ndarray, shape (e, 2)
        The one or two faces adjacent to each edge (-1 when absent).
    twin : ndarray, shape (3m,)
        Opposite half-edge of half-edge ``3 f + k``, or -1 on the boundary.
    closed : bool
        True when every edge has two faces.
    """

    def __init__(self, vertices, faces, validate=True, allow_multi=False):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (n, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must have shape (m, 3)")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshError("face index out of range")
        self._geometry = None
        self._topology = None
        self._build_topology()
        if validate:
            self._validate(allow_multi)

    # ------------------------------------------------------------------
    # construction helpers
    # ------------------------------------------------------------------
    def with_vertices(self, vertices):
        """Return a mesh with new positions and the same connectivity."""
        new = TriMesh.__new__(TriMesh)
        new.vertices = np.ascontiguousarray(vertices, dtype=float)
        new.faces = self.faces
        new._geometry = None
        new._topology = self._topology
        new.__dict__.update(self._topology)
        return new

    def copy(self):
        return self.with_vertices(self.vertices.copy())

    def _build_topology(self):
        f = self.faces
        m = len(f)
        nv = len(self.vertices)
        he_from = f.reshape(-1)
        he_to = np.roll(f, -1, axis=1).reshape(-1)
        lo = np.minimum(he_from, he_to)
        hi = np.maximum(he_from, he_to)
        key = lo * nv + hi
        uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            bad = uniq[counts > 2][0]
            raise NonManifoldError(
                "non-manifold edge (%d, %d) shared by more than two faces" % (bad // nv, bad % nv))
        edges = np.column_stack([uniq // nv, uniq % nv])
        face_edges = inv.reshape(m, 3)
        order = np.argsort(inv, kind="stable")
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        edge_he = np.full((len(uniq), 2), -1, dtype=np.int64)
        edge_he[:, 0] = order[starts]
        two = counts == 2
        edge_he[two, 1] = order[starts[two] + 1]
        twin = np.full(3 * m, -1, dtype=np.int64)
        twin[edge_he[two, 0]] = edge_he[two, 1]
        twin[edge_he[two, 1]] = edge_he[two, 0]
        edge_faces = np.where(edge_he >= 0, edge_he // 3, -1)
        boundary_edges = np.flatnonzero(~two)
        boundary_vertices = np.zeros(nv, dtype=bool)
        boundary_vertices[edges[boundary_edges].reshape(-1)] = True
        rows = np.repeat(np.arange(m), 3)
        vf = sparse.csr_matrix((np.ones(3 * m), (f.reshape(-1), rows)), shape=(nv, m))
        adj = sparse.csr_matrix(
            (np.ones(2 * len(edges)), (np.r_[edges[:, 0], edges[:, 1]], np.r_[edges[:, 1], edges[:, 0]])),
            shape=(nv, nv))
        self._topology = dict(
            edges=edges,
            face_edges=face_edges,
            edge_faces=edge_faces,
            twin=twin,
            closed=bool(np.all(two)),
            boundary_vertices=boundary_vertices,
            vertex_faces=vf,
            adjacency=adj,
        )
        self.__dict__.update(self._topology)

    def _validate(self, allow_multi):
        used = np.zeros(len(self.vertices), dtype=bool)
        used[self.faces.reshape(-1)] = True
        if not np.all(used):
            raise IsolatedVertexError("vertex %d has no incident face" % np.flatnonzero(~used)[0])
        ncomp = self.n_components()
        if ncomp > 1 and not allow_multi:
            raise MultiComponentError(
                "mesh has %d components; non-single-component accepted only with flag --allow-multi"
                % ncomp)
        if not self.is_oriented():
            self._orient()
        if self.closed:
            # each closed component gets outward normals
            labels = self.component_labels()[self.faces[:, 0]]
            v = self.vertices
            f = self.faces
            vol = np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]]))
            comp_vol = np.bincount(labels, weights=vol)
            inward = comp_vol[labels] < 0
            if np.any(inward):
                faces = self.faces.copy()
                faces[inward] = faces[inward][:, ::-1]
                self.faces = faces
                self._build_topology()

    # ------------------------------------------------------------------
    # topology queries
    # ------------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def euler(self):
        """Euler characteristic V - E + F."""
        return self.n_vertices - len(self.edges) + self.n_faces

    def n_components(self):
        n, _ = csgraph.connected_components(self.adjacency, directed=False)
        return n

    def component_labels(self):
        _, labels = csgraph.connected_components(self.adjacency, directed=False)
        return labels

    def is_oriented(self):
        """True when every interior edge is traversed once in each direction."""
        he_from = self.faces.reshape(-1)
        has = self.twin >= 0
        # twin half-edges must start where the other one ends
        return bool(np.all(he_from[self.twin[has]] != he_from[has]))

    def _orient(self):
        """Flip faces so that adjacent faces agree; raise if impossible."""
        m = self.n_faces
        flip = np.full(m, -1, dtype=np.int64)
        he_from = self.faces.reshape(-1)
        for start in range(m):
            if flip[start] >= 0:
                continue
            flip[start] = 0
            queue = deque([start])
            while queue:
                fi = queue.popleft()
                for k in range(3):
                    h = 3 * fi + k
                    t = self.twin[h]
                    if t < 0:
                        continue
                    fj = t // 3
                    same = he_from[t] == he_from[h]
                    want = flip[fi] ^ int(same)
                    if flip[fj] < 0:
                        flip[fj] = want
                        queue.append(fj)
                    elif flip[fj] != want:
                        raise NonOrientableError("mesh is not orientable")
        nflip = int(flip.sum())
        if nflip:
            logger.info("reoriented %d faces", nflip)
            faces = self.faces.copy()
            faces[flip == 1] = faces[flip == 1][:, ::-1]
            self.faces = faces
            self._build_topology()

    def vertex_neighbors(self, i):
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    # ------------------------------------------------------------------
    # elementary geometry
    # ------------------------------------------------------------------
    def face_normals(self, unit=True):
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        if unit:
            n = n / np.linalg.norm(n, axis=1, keepdims=True)
        return n

    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_normals(unit=False), axis=1)

    def area(self):
        return float(self.face_areas().sum())

    def signed_volume(self):
        v = self.vertices
        f = self.faces
        return float(np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0)

    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    def mean_edge_length(self):
        return float(self.edge_lengths().mean())

    def centroids(self):
        return self.vertices[self.faces].mean(axis=1)

    def geometry(self):
        """Per-vertex geometry cache, computed once per vertex snapshot."""
        if self._geometry is None:
            from .geometry import compute_geometry
            self._geometry = compute_geometry(self)
        return self._geometry

    def angle_defects(self):
        """Gauss-Bonnet angle defect per vertex (boundary vertices use pi)."""
        v = self.vertices
        f = self.faces
        ang = np.zeros(f.shape)
        for k in range(3):
            a = v[f[:, (k + 1) % 3]] - v[f[:, k]]
            b = v[f[:, (k + 2) % 3]] - v[f[:, k]]
            ang[:, k] = np.arctan2(np.linalg.norm(np.cross(a, b), axis=1), np.einsum("ij,ij->i", a, b))
        total = np.bincount(f.reshape(-1), weights=ang.reshape(-1), minlength=self.n_vertices)
        full = np.where(self.boundary_vertices, np.pi, 2 * np.pi)
        return full - total

    def __repr__(self):
        return "TriMesh(n_vertices=%d, n_faces=%d, closed=%s)" % (
            self.n_vertices, self.n_faces, self.closed)


def remove_degenerate_faces(vertices, faces, rel_tol=1e-14):
    """Collapse faces whose area is below ``rel_tol`` times the mean area.

    The shortest edge of each degenerate face is merged into its midpoint,
    which removes the face and keeps the surface closed.

    Returns
    -------
    vertices, faces : ndarray
        Cleaned arrays with unused vertices removed.
    n_collapsed : int
        Number of edge collapses performed.
    """
    v = np.array(vertices, dtype=float)
    f = np.array(faces, dtype=np.int64)
    collapsed = 0
    for _ in range(100):
        cr = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        area = 0.5 * np.linalg.norm(cr, axis=1)
        repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        f = f[~repeated]
        area = area[~repeated]
        if len(f) == 0:
            break
        bad = np.flatnonzero(area <= rel_tol * area.mean())
        if len(bad) == 0:
            break
        fi = f[bad[0]]
        lens = [np.linalg.norm(v[fi[(k + 1) % 3]] - v[fi[k]]) for k in range(3)]
        k = int(np.argmin(lens))
        a, b = fi[k], fi[(k + 1) % 3]
        v[a] = 0.5 * (v[a] + v[b])
        f[f == b] = a
        collapsed += 1
    used = np.unique(f)
    remap = np.full(len(v), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    if collapsed:
        logger.warning("collapsed %d degenerate faces at load", collapsed)
    return v[used], remap[f], collapsed

"""Discrete differential operators on triangle meshes.

Sign conventions: normals point outward and the mean curvature is the sum
of principal curvatures, so a sphere of radius R has ``H = 2 / R``. The
cotangent stiffness ``L`` is positive semidefinite and the Laplace-Beltrami
operator is ``-M^{-1} L``, giving ``H n = M^{-1} L x``.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)


@dataclass
class VertexGeometry:
    """Per-vertex geometric quantities.

    Attributes
    ----------
    normal : ndarray, shape (n, 3)
        Area-weighted unit normals.
    mean_curvature : ndarray, shape (n,)
        Signed mean curvature from the cotangent Laplacian.
    second_fundamental_norm_sq : ndarray, shape (n,)
        ``|A|^2`` assembled as ``H^2 / 2 + |A_0|^2`` where the traceless part
        comes from the 2-ring quadric fit.
    vertex_area : ndarray, shape (n,)
        Mixed Voronoi areas.
    frame : ndarray, shape (n, 2, 3)
        Orthonormal tangent basis ``e1, e2`` at each vertex.
    shape_operator : ndarray, shape (n, 2, 2)
        Shape operator ``dn`` in the tangent frame from the quadric fit.
    """

    normal: np.ndarray
    mean_curvature: np.ndarray
    second_fundamental_norm_sq: np.ndarray
    vertex_area: np.ndarray
    frame: np.ndarray
    shape_operator: np.ndarray

    @property
    def H(self):
        return self.mean_curvature

    @property
    def A2(self):
        return self.second_fundamental_norm_sq

    def principal_curvatures(self):
        """Eigenvalues of the symmetrized shape operator, ascending."""
        s = 0.5 * (self.shape_operator + np.swapaxes(self.shape_operator, 1, 2))
        return np.linalg.eigvalsh(s)


def corner_cotangents(vertices, faces):
    """Cotangent of the angle at each corner of each face, shape (m, 3)."""
    v = vertices
    cot = np.empty(faces.shape)
    for k in range(3):
        a = v[faces[:, (k + 1) % 3]] - v[faces[:, k]]
        b = v[faces[:, (k + 2) % 3]] - v[faces[:, k]]
        cr = np.linalg.norm(np.cross(a, b), axis=1)
        cot[:, k] = np.einsum("ij,ij->i", a, b) / cr
    return cot


def cotangent_laplacian(mesh, cot=None):
    """Symmetric positive semidefinite cotangent stiffness matrix.

    ``L[i, j] = -(cot a_ij + cot b_ij) / 2`` for edges and rows sum to zero.
    """
    f = mesh.faces
    cot = corner_cotangents(mesh.vertices, f) if cot is None else cot
    n = mesh.n_vertices
    # the angle at corner k is opposite edge (k+1, k+2)
    i = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    j = np.concatenate([f[:, 2], f[:, 0], f[:, 1]])
    w = 0.5 * np.concatenate([cot[:, 0], cot[:, 1], cot[:, 2]])
    W = sparse.csr_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n))
    d = np.asarray(W.sum(axis=1)).ravel()
    return (sparse.diags(d) - W).tocsr()


def mixed_voronoi_areas(mesh, cot=None):
    """Mixed Voronoi vertex areas; they sum to the total mesh area."""
    v = mesh.vertices
    f = mesh.faces
    e = [v[f[:, (k + 2) % 3]] - v[f[:, (k + 1) % 3]] for k in range(3)]
    l2 = np.column_stack([np.einsum("ij,ij->i", x, x) for x in e])
    cot = corner_cotangents(v, f) if cot is None else cot
    area = 0.5 * np.linalg.norm(np.cross(e[0], e[1]), axis=1)
    obtuse = cot < 0
    any_obtuse = obtuse.any(axis=1)
    out = np.zeros(f.shape)
    for k in range(3):
        # Voronoi share of corner k: edges (k,k+1) and (k,k+2)
        k1, k2 = (k + 1) % 3, (k + 2) % 3
        out[:, k] = 0.125 * (l2[:, k2] * cot[:, k2] + l2[:, k1] * cot[:, k1])
    for k in range(3):
        sel = any_obtuse
        out[sel, k] = np.where(obtuse[sel, k], 0.5 * area[sel], 0.25 * area[sel])
    return np.bincount(f.reshape(-1), weights=out.reshape(-1), minlength=mesh.n_vertices)


def laplacian_operators(mesh):
    """Cotangent stiffness and mixed Voronoi areas sharing one cotangent pass."""
    cot = corner_cotangents(mesh.vertices, mesh.faces)
    return cotangent_laplacian(mesh, cot), mixed_voronoi_areas(mesh, cot)


def vertex_normals(mesh):
    """Area-weighted unit vertex normals."""
    fn = mesh.face_normals(unit=False)
    n = mesh.vertex_faces @ fn
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def tangent_frames(normals):
    """Orthonormal tangent bases, shape (n, 2, 3)."""
    n = normals
    helper = np.where(np.abs(n[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = helper - np.einsum("ij,ij->i", helper, n)[:, None] * n
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(n, e1)
    return np.stack([e1, e2], axis=1)


def ring_neighbors(mesh, rings=2, min_count=6):
    """Padded neighbor lists of the k-ring of each vertex.

    Returns
    -------
    idx : ndarray, shape (n, kmax)
        Neighbor indices padded with the vertex itself.
    mask : ndarray of bool, shape (n, kmax)
        Valid entries.
    """
    a = mesh.adjacency
    reach = a.copy()
    power = a.copy()
    for r in range(1, rings):
        power = power @ a
        reach = reach + power
    reach = reach.tocsr()
    reach.setdiag(0)
    reach.eliminate_zeros()
    counts = np.diff(reach.indptr)
    if np.any(counts < min_count) and rings < 4:
        deficient = counts < min_count
        logger.debug("%d vertices with short %d-ring, widening", deficient.sum(), rings)
        wide_idx, wide_mask = ring_neighbors(mesh, rings + 1, min_count)
        idx, mask = _pad(reach)
        if wide_idx.shape[1] > idx.shape[1]:
            idx = np.pad(idx, ((0, 0), (0, wide_idx.shape[1] - idx.shape[1])))
            mask = np.pad(mask, ((0, 0), (0, wide_mask.shape[1] - mask.shape[1])))
        idx[deficient] = wide_idx[deficient][:, :idx.shape[1]]
        mask[deficient] = wide_mask[deficient][:, :idx.shape[1]]
        idx[~mask] = np.broadcast_to(np.arange(len(idx))[:, None], idx.shape)[~mask]
        return idx, mask
    return _pad(reach)


def cached_ring_neighbors(mesh):
    """2-ring neighbor lists stored with the mesh connectivity."""
    topo = mesh._topology
    if "ring2" not in topo:
        topo["ring2"] = ring_neighbors(mesh, 2)
    return topo["ring2"]


def _pad(csr):
    n = csr.shape[0]
    counts = np.diff(csr.indptr)
    kmax = counts.max()
    idx = np.repeat(np.arange(n)[:, None], kmax, axis=1)
    mask = np.arange(kmax)[None, :] < counts[:, None]
    idx[mask] = csr.indices
    return idx, mask


def quadric_fit(points, values_mask, center, normal, frame, values=None, center_value=None):
    """Batched weighted least-squares quadric fits in local tangent frames.

    Fits ``z = g . p + 0.5 p^T Hs p`` (through the center) where ``p`` are
    tangent coordinates. ``z`` is the normal height when ``values`` is None,
    otherwise ``values - center_value``.

    Returns
    -------
    grad : ndarray, shape (n, 2)
    hess : ndarray, shape (n, 2, 2)
    """
    d = points - center[:, None, :]
    x = np.einsum("nkj,nj->nk", d, frame[:, 0])
    y = np.einsum("nkj,nj->nk", d, frame[:, 1])
    if values is None:
        z = np.einsum("nkj,nj->nk", d, normal)
    else:
        z = values - center_value[:, None]
    r2 = x * x + y * y
    scale = np.sqrt(np.where(values_mask, r2, 0).sum(axis=1) / np.maximum(values_mask.sum(axis=1), 1))
    scale = np.where(scale > 0, scale, 1.0)
    w = values_mask * np.exp(-r2 / (4 * scale[:, None] ** 2))
    xs, ys = x / scale[:, None], y / scale[:, None]
    basis = np.stack([xs, ys, 0.5 * xs * xs, xs * ys, 0.5 * ys * ys], axis=-1)
    bw = basis * w[..., None]
    ata = np.einsum("nki,nkj->nij", bw, basis) + 1e-12 * np.eye(5)
    atb = np.einsum("nki,nk->ni", bw, z)
    c = np.linalg.solve(ata, atb[..., None])[..., 0]
    grad = c[:, :2] / scale[:, None]
    hess = np.empty((len(c), 2, 2))
    hess[:, 0, 0] = c[:, 2]
    hess[:, 0, 1] = hess[:, 1, 0] = c[:, 3]
    hess[:, 1, 1] = c[:, 4]
    hess /= scale[:, None, None] ** 2
    return grad, hess


def shape_operators(mesh, normals, frame, neighbors=None):
    """Shape operator ``dn`` in each tangent frame from a 2-ring quadric fit.

    With the surface written locally as ``z = f(x, y)`` along the outward
    normal, ``dn = -I^{-1} II`` where ``II = Hess f / sqrt(1 + |grad f|^2)``.
    A sphere therefore gets ``dn = Id / R`` and ``trace = H``.
    """
    idx, mask = neighbors if neighbors is not None else cached_ring_neighbors(mesh)
    pts = mesh.vertices[idx]
    g, h = quadric_fit(pts, mask, mesh.vertices, normals, frame)
    w = np.sqrt(1 + np.einsum("ni,ni->n", g, g))
    first = np.eye(2)[None] + g[:, :, None] * g[:, None, :]
    second = h / w[:, None, None]
    return -np.linalg.solve(first, second)


def compute_geometry(mesh):
    """Normals, mean curvature, ``|A|^2`` and vertex areas of a mesh.

    Parameters
    ----------
    mesh : TriMesh

    Returns
    -------
    VertexGeometry
    """
    used = np.diff(mesh.vertex_faces.indptr)
    if np.any(used == 0):
        from .trimesh import IsolatedVertexError
        raise IsolatedVertexError("vertex %d has no incident face" % np.flatnonzero(used == 0)[0])
    normals = vertex_normals(mesh)
    L, areas = laplacian_operators(mesh)
    hn = (L @ mesh.vertices) / areas[:, None]
    H = np.einsum("ij,ij->i", hn, normals)
    frame = tangent_frames(normals)
    S = shape_operators(mesh, normals, frame)
    sym = 0.5 * (S + np.swapaxes(S, 1, 2))
    tr = sym[:, 0, 0] + sym[:, 1, 1]
    traceless = np.einsum("nij,nij->n", sym, sym) - 0.5 * tr * tr
    # boundary vertices: the cotangent formula is one-sided, use the fit
    bnd = mesh.boundary_vertices
    if np.any(bnd):
        H = np.where(bnd, tr, H)
    A2 = 0.5 * H * H + np.maximum(traceless, 0.0)
    return VertexGeometry(normal=normals, mean_curvature=H, second_fundamental_norm_sq=A2,
                          vertex_area=areas, frame=frame, shape_operator=S)


def mean_curvature_vector(mesh, L=None, areas=None):
    """``H n = M^{-1} L x`` from the cotangent Laplacian."""
    L = cotangent_laplacian(mesh) if L is None else L
    areas = mixed_voronoi_areas(mesh) if areas is None else areas
    return (L @ mesh.vertices) / areas[:, None]


def fit_scalar_derivatives(mesh, values, geometry=None, neighbors=None):
    """Tangential gradient and Hessian of a vertex field by quadric fit.

    Returns
    -------
    grad : ndarray, shape (n, 2)
        Components in ``geometry.frame``.
    hess : ndarray, shape (n, 2, 2)
    """
    geo = mesh.geometry() if geometry is None else geometry
    idx, mask = neighbors if neighbors is not None else cached_ring_neighbors(mesh)
    vals = np.asarray(values, dtype=float)
    return quadric_fit(mesh.vertices[idx], mask, mesh.vertices, geo.normal, geo.frame,
                       values=vals[idx], center_value=vals)


def gauss_bonnet_residual(mesh):
    """``sum(angle defect) - 2 pi chi`` for a closed mesh."""
    return float(mesh.angle_defects().sum() - 2 * np.pi * mesh.euler())

"""Reference surfaces used by tests, examples and the acceptance suite."""

import numpy as np

from .trimesh import TriMesh


def icosphere(subdivisions=5, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Geodesic sphere from a subdivided icosahedron.

    ``subdivisions=4`` gives 2562 vertices and ``subdivisions=5`` gives 10242.
    """
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        v, f = _midpoint_subdivide(v, f)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    return TriMesh(radius * v + np.asarray(center, dtype=float), f)


def _midpoint_subdivide(v, f):
    nv = len(v)
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e.sort(axis=1)
    key = e[:, 0] * nv + e[:, 1]
    uniq, inv = np.unique(key, return_inverse=True)
    a, b = uniq // nv, uniq % nv
    mid = 0.5 * (v[a] + v[b])
    m = len(f)
    ab, bc, ca = (inv[:m] + nv, inv[m:2 * m] + nv, inv[2 * m:] + nv)
    nf = np.concatenate([
        np.column_stack([f[:, 0], ab, ca]),
        np.column_stack([f[:, 1], bc, ab]),
        np.column_stack([f[:, 2], ca, bc]),
        np.column_stack([ab, bc, ca]),
    ])
    return np.vstack([v, mid]), nf


def subdivide(mesh):
    """One round of 1-to-4 midpoint subdivision (positions are not smoothed)."""
    v, f = _midpoint_subdivide(mesh.vertices, mesh.faces)
    return TriMesh(v, f, allow_multi=True)


def plane_grid(half_width=1.0, n=41, z=0.0, normal_axis=2, jitter=0.0, seed=0):
    """Square patch of the plane ``x[normal_axis] = z`` on a regular grid.

    Cells are split along alternating diagonals so the triangulation has no
    preferred direction. ``jitter`` moves interior vertices in-plane by a
    fraction of the spacing.
    """
    s = np.linspace(-half_width, half_width, n)
    X, Y = np.meshgrid(s, s, indexing="ij")
    uv = np.column_stack([X.ravel(), Y.ravel()])
    if jitter > 0:
        h = s[1] - s[0]
        rng = np.random.default_rng(seed)
        inner = (np.abs(uv) < half_width - 0.5 * h).all(axis=1)
        uv[inner] += jitter * h * rng.uniform(-0.5, 0.5, size=(inner.sum(), 2))
    idx = np.arange(n * n).reshape(n, n)
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            if (i + j) % 2 == 0:
                faces += [[a, b, c], [a, c, d]]
            else:
                faces += [[a, b, d], [b, c, d]]
    axes = [k for k in range(3) if k != normal_axis]
    v = np.zeros((n * n, 3))
    v[:, axes[0]] = uv[:, 0]
    v[:, axes[1]] = uv[:, 1]
    v[:, normal_axis] = z
    f = np.array(faces, dtype=np.int64)
    mesh = TriMesh(v, f)
    normal = mesh.face_normals()[0]
    if normal[normal_axis] < 0:
        mesh = TriMesh(v, f[:, ::-1])
    return mesh


def graph_surface(func, half_width=1.0, n=41):
    """Graph ``z = func(x, y)`` over a square, triangulated like :func:`plane_grid`."""
    base = plane_grid(half_width, n)
    v = base.vertices.copy()
    v[:, 2] = func(v[:, 0], v[:, 1])
    return base.with_vertices(v)


def cylinder_tube(radius=np.sqrt(2.0), length=4.0, n_around=64, n_along=None):
    """Open tube around the z-axis with outward normals."""
    if n_along is None:
        h = 2 * np.pi * radius / n_around
        n_along = int(round(length / (h * np.sqrt(3) / 2))) + 1
    th = np.linspace(0, 2 * np.pi, n_around, endpoint=False)
    zs = np.linspace(-length / 2, length / 2, n_along)
    verts = []
    for j, z in enumerate(zs):
        shift = 0.5 * (j % 2) * (th[1] - th[0])
        verts.append(np.column_stack([radius * np.cos(th + shift), radius * np.sin(th + shift),
                                      np.full(n_around, z)]))
    v = np.vstack(verts)
    faces = []
    for j in range(n_along - 1):
        r0, r1 = j * n_around, (j + 1) * n_around
        for i in range(n_around):
            i1 = (i + 1) % n_around
            if j % 2 == 0:
                faces += [[r0 + i, r0 + i1, r1 + i], [r0 + i1, r1 + i1, r1 + i]]
            else:
                faces += [[r0 + i, r1 + i1, r1 + i], [r0 + i, r0 + i1, r1 + i1]]
    return TriMesh(v, np.array(faces, dtype=np.int64))


def surface_of_revolution(profile_r, profile_z, n_around=64):
    """Closed surface from a profile curve with poles at both ends.

    ``profile_r[0]`` and ``profile_r[-1]`` must be zero; the profile runs from
    the bottom pole to the top pole.
    """
    r = np.asarray(profile_r, dtype=float)
    z = np.asarray(profile_z, dtype=float)
    rings = len(r) - 2
    th = np.linspace(0, 2 * np.pi, n_around, endpoint=False)
    verts = [[0.0, 0.0, z[0]]]
    for j in range(1, rings + 1):
        shift = 0.5 * (j % 2) * (th[1] - th[0])
        verts += list(np.column_stack([r[j] * np.cos(th + shift), r[j] * np.sin(th + shift),
                                       np.full(n_around, z[j])]))
    verts.append([0.0, 0.0, z[-1]])
    v = np.array(verts)
    top = len(v) - 1
    faces = []
    for i in range(n_around):
        faces.append([0, 1 + (i + 1) % n_around, 1 + i])
    for j in range(rings - 1):
        r0, r1 = 1 + j * n_around, 1 + (j + 1) * n_around
        for i in range(n_around):
            i1 = (i + 1) % n_around
            if (j + 1) % 2 == 1:
                faces += [[r0 + i, r0 + i1, r1 + i1], [r0 + i, r1 + i1, r1 + i]]
            else:
                faces += [[r0 + i, r0 + i1, r1 + i], [r0 + i1, r1 + i1, r1 + i]]
    last = 1 + (rings - 1) * n_around
    for i in range(n_around):
        faces.append([last + i, last + (i + 1) % n_around, top])
    return TriMesh(v, np.array(faces, dtype=np.int64))


def capped_cylinder(radius=np.sqrt(2.0), length=8.0, n_around=64):
    """Tube of the given radius closed by hemispherical caps.

    Returns
    -------
    mesh : TriMesh
    tube_mask : ndarray of bool
        Vertices on the straight part, where the surface is exactly the
        cylinder.
    """
    h = 2 * np.pi * radius / n_around
    n_cap = max(4, int(np.ceil(0.5 * np.pi * radius / h)))
    n_tube = max(2, int(np.ceil(length / (h * np.sqrt(3) / 2))))
    phi = np.linspace(-np.pi / 2, 0, n_cap + 1)
    zt = np.linspace(-length / 2, length / 2, n_tube + 1)
    r = np.concatenate([radius * np.cos(phi), np.full(n_tube - 1, radius), radius * np.cos(phi[::-1])])
    z = np.concatenate([-length / 2 + radius * np.sin(phi), zt[1:-1], length / 2 - radius * np.sin(phi[::-1])])
    r[0] = r[-1] = 0.0
    mesh = surface_of_revolution(r, z, n_around)
    tube_mask = np.abs(mesh.vertices[:, 2]) <= length / 2 + 1e-12
    return mesh, tube_mask


def torus(major=2.0, minor=0.75, n_major=96, n_minor=36):
    """Torus of revolution around the z-axis with outward normals."""
    u = np.linspace(0, 2 * np.pi, n_major, endpoint=False)
    w = np.linspace(0, 2 * np.pi, n_minor, endpoint=False)
    U, W = np.meshgrid(u, w, indexing="ij")
    v = np.column_stack([
        ((major + minor * np.cos(W)) * np.cos(U)).ravel(),
        ((major + minor * np.cos(W)) * np.sin(U)).ravel(),
        (minor * np.sin(W)).ravel(),
    ])
    idx = np.arange(n_major * n_minor).reshape(n_major, n_minor)
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = idx[i, j]
            b = idx[(i + 1) % n_major, j]
            c = idx[(i + 1) % n_major, (j + 1) % n_minor]
            d = idx[i, (j + 1) % n_minor]
            faces += [[a, b, c], [a, c, d]]
    return TriMesh(v, np.array(faces, dtype=np.int64))


def tetrahedron(scale=1.0):
    v = scale * np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]], dtype=np.int64)
    return TriMesh(v, f)


def merge(*meshes):
    """Disjoint union of meshes as a single multi-component mesh."""
    verts, faces, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + off)
        off += m.n_vertices
    return TriMesh(np.vstack(verts), np.vstack(faces), allow_multi=True)


def perturbed_sphere(subdivisions=4, radius=2.0, amplitude=0.1, mode=(2, 0)):
    """Sphere with radial perturbation ``radius * (1 + amplitude * Y)``.

    ``mode=(2, 0)`` uses the zonal harmonic ``P_2(cos theta)``; ``(3, 0)``
    uses ``P_3``.
    """
    base = icosphere(subdivisions, 1.0)
    x = base.vertices
    c = x[:, 2]
    l = mode[0]
    from scipy.special import eval_legendre
    y = eval_legendre(l, c)
    return base.with_vertices(radius * (1 + amplitude * y)[:, None] * x)

"""OBJ and PLY reading, OBJ writing."""

import logging
import os

import numpy as np

from .trimesh import MeshError, TriMesh, remove_degenerate_faces

logger = logging.getLogger(__name__)


class MeshParseError(MeshError):
    """The file does not parse as the declared format."""


def read_obj(path):
    """Read vertices and triangular faces from a Wavefront OBJ file.

    Polygonal faces are fan-triangulated. Texture and normal indices are
    ignored.
    """
    verts = []
    faces = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    idx = []
                    for tok in parts[1:]:
                        i = int(tok.split("/")[0])
                        idx.append(i - 1 if i > 0 else len(verts) + i)
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
            except (ValueError, IndexError) as exc:
                raise MeshParseError("%s:%d: %s" % (path, lineno, exc)) from exc
    if not verts or not faces:
        raise MeshParseError("%s: no vertices or faces" % path)
    v = np.array(verts, dtype=float)
    if v.shape[1] != 3:
        raise MeshParseError("%s: vertex records need three coordinates" % path)
    return v, np.array(faces, dtype=np.int64)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def read_ply(path):
    """Read vertices and faces from an ASCII or binary PLY file."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise MeshParseError("%s: missing ply magic" % path)
        fmt = None
        elements = []
        while True:
            line = fh.readline()
            if not line:
                raise MeshParseError("%s: unterminated header" % path)
            parts = line.decode("ascii", "replace").split()
            if not parts or parts[0] in ("comment", "obj_info"):
                continue
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                elements.append([parts[1], int(parts[2]), []])
            elif parts[0] == "property":
                if not elements:
                    raise MeshParseError("%s: property before element" % path)
                if parts[1] == "list":
                    elements[-1][2].append((parts[4], "list", parts[2], parts[3]))
                else:
                    elements[-1][2].append((parts[2], parts[1]))
            elif parts[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
            raise MeshParseError("%s: unknown PLY format %r" % (path, fmt))
        body = fh.read()
    try:
        if fmt == "ascii":
            data = _ply_ascii(body, elements)
        else:
            data = _ply_binary(body, elements, "<" if fmt == "binary_little_endian" else ">")
    except (ValueError, IndexError, KeyError) as exc:
        raise MeshParseError("%s: %s" % (path, exc)) from exc
    if "vertex" not in data or "face" not in data:
        raise MeshParseError("%s: PLY needs vertex and face elements" % path)
    vx = data["vertex"]
    v = np.column_stack([vx["x"], vx["y"], vx["z"]]).astype(float)
    polys = data["face"].get("vertex_indices", data["face"].get("vertex_index"))
    if polys is None:
        raise MeshParseError("%s: face element lacks vertex_indices" % path)
    faces = []
    for poly in polys:
        for k in range(1, len(poly) - 1):
            faces.append([poly[0], poly[k], poly[k + 1]])
    return v, np.array(faces, dtype=np.int64)


def _ply_ascii(body, elements):
    tokens = body.split()
    pos = 0
    out = {}
    for name, count, props in elements:
        cols = {p[0]: [] for p in props}
        for _ in range(count):
            for p in props:
                if p[1] == "list":
                    n = int(tokens[pos])
                    pos += 1
                    cols[p[0]].append([int(float(t)) for t in tokens[pos:pos + n]])
                    pos += n
                else:
                    cols[p[0]].append(float(tokens[pos]))
                    pos += 1
        out[name] = cols
    return out


def _ply_binary(body, elements, endian):
    pos = 0
    out = {}
    for name, count, props in elements:
        if all(p[1] != "list" for p in props):
            dt = np.dtype([(p[0], endian + _PLY_TYPES[p[1]]) for p in props])
            arr = np.frombuffer(body, dtype=dt, count=count, offset=pos)
            pos += dt.itemsize * count
            out[name] = {p[0]: arr[p[0]] for p in props}
            continue
        cols = {p[0]: [] for p in props}
        for _ in range(count):
            for p in props:
                if p[1] == "list":
                    ct = np.dtype(endian + _PLY_TYPES[p[2]])
                    it = np.dtype(endian + _PLY_TYPES[p[3]])
                    n = int(np.frombuffer(body, ct, 1, pos)[0])
                    pos += ct.itemsize
                    cols[p[0]].append(np.frombuffer(body, it, n, pos).astype(np.int64))
                    pos += it.itemsize * n
                else:
                    dt = np.dtype(endian + _PLY_TYPES[p[1]])
                    cols[p[0]].append(np.frombuffer(body, dt, 1, pos)[0])
                    pos += dt.itemsize
        out[name] = cols
    return out


def load_mesh(path, fmt=None, allow_multi=False):
    """Load and validate a closed or bordered triangle mesh.

    Parameters
    ----------
    path : str
        File to read.
    fmt : {"obj", "ply"}, optional
        Declared format; inferred from the extension when omitted.
    allow_multi : bool, default=False
        Accept files with several connected components.

    Returns
    -------
    TriMesh
        Validated mesh with orientation repaired when a consistent
        orientation exists and degenerate faces collapsed.

    Raises
    ------
    MeshParseError, NonManifoldError, NonOrientableError, MultiComponentError
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    fmt = (fmt or os.path.splitext(path)[1].lstrip(".")).lower()
    if fmt == "obj":
        v, f = read_obj(path)
    elif fmt == "ply":
        v, f = read_ply(path)
    else:
        raise MeshParseError("unsupported mesh format %r" % fmt)
    if f.min() < 0 or f.max() >= len(v):
        raise MeshParseError("%s: face index out of range" % path)
    v, f, ncol = remove_degenerate_faces(v, f)
    if ncol:
        logger.warning("%s: %d degenerate faces collapsed", path, ncol)
    return TriMesh(v, f, allow_multi=allow_multi)


def write_obj(mesh, path, precision=17):
    """Write a mesh as OBJ with full double precision."""
    fmt = "v %%.%dg %%.%dg %%.%dg\n" % (precision, precision, precision)
    with open(path, "w") as fh:
        for p in mesh.vertices:
            fh.write(fmt % tuple(p))
        for t in mesh.faces + 1:
            fh.write("f %d %d %d\n" % tuple(t))

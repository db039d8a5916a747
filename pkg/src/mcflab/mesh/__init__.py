"""Triangle meshes and discrete geometric operators."""

from .trimesh import (
    IsolatedVertexError,
    MeshError,
    MultiComponentError,
    NonManifoldError,
    NonOrientableError,
    TriMesh,
)
from .io import MeshParseError, load_mesh, read_obj, read_ply, write_obj
from . import primitives

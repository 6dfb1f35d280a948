"""Energy and potential enstrophy conserving shallow-water schemes on
unstructured C-grid and Z-grid meshes."""

from .mesh import Mesh, MeshError, build_mesh

__all__ = ["Mesh", "MeshError", "build_mesh"]
__version__ = "0.1.0"

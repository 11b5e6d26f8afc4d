from .mesh import AffineCellMap, MeshQuality, SimplicialMesh
from .quadrature import QuadRule, RadialWeight, SingularWeight
from .linalg import DofMap, EigSolution, SparseSym

__all__ = [
    "AffineCellMap",
    "MeshQuality",
    "SimplicialMesh",
    "QuadRule",
    "RadialWeight",
    "SingularWeight",
    "DofMap",
    "EigSolution",
    "SparseSym",
]

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

DomainTag = Literal["interval", "ball_polyhedral", "ball_projected"]

ORIGIN_ATOL = 1e-14


@dataclass(frozen=True)
class SimplicialMesh:
    """Conforming simplicial mesh of the unit ball (dim 3) or of [0, 1] (dim 1).

    ``swapped`` marks tetrahedra whose first two vertices were exchanged to make
    the stored orientation positive; refinement undoes the exchange so children
    follow the parent's subdivision order. ``parent_edges`` lists, for every
    vertex created by the last refinement, the two coarse vertices it bisects.
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    boundary_vertex: np.ndarray
    level: int = 0
    domain_tag: DomainTag = "interval"
    swapped: Optional[np.ndarray] = field(default=None, repr=False)
    parent_edges: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_cells(self) -> int:
        return int(self.cells.shape[0])

    @property
    def origin_index(self) -> int:
        norms = np.linalg.norm(self.vertices, axis=1)
        hits = np.flatnonzero(norms <= ORIGIN_ATOL)
        if hits.size != 1:
            raise ValueError("mesh must contain the origin exactly once as a vertex")
        return int(hits[0])

    def cell_vertices(self) -> np.ndarray:
        """Vertex coordinates per cell, shape (n_cells, dim + 1, dim)."""
        return self.vertices[self.cells]


@dataclass(frozen=True)
class MeshQuality:
    h: float
    h_min: float
    sigma: float
    quasi_uniform_ratio: float
    volume: float


@dataclass(frozen=True)
class AffineCellMap:
    """x = matrix @ x_hat + offset from the reference simplex onto one cell."""

    matrix: np.ndarray
    offset: np.ndarray
    det_abs: float

    @property
    def dim(self) -> int:
        return int(self.offset.shape[0])

    def vertices(self) -> np.ndarray:
        return np.vstack([self.offset, self.offset + self.matrix.T])

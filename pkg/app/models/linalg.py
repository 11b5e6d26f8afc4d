from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from app.core.errors import ParameterError

ZERO_DROP = 1e-300


@dataclass(frozen=True)
class DofMap:
    """Interior vertices of a mesh, numbered in increasing vertex order."""

    dof_vertices: np.ndarray
    vertex_to_dof: np.ndarray

    @property
    def n_dofs(self) -> int:
        return int(self.dof_vertices.shape[0])


@dataclass(frozen=True)
class SparseSym:
    """Symmetric sparse matrix stored as its lower triangle (row >= col)."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @classmethod
    def from_matrix(cls, matrix) -> "SparseSym":
        matrix = sp.csr_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1]:
            raise ParameterError(f"matrix must be square, got {matrix.shape}")
        lower = sp.tril(matrix, format="coo")
        keep = np.abs(lower.data) > ZERO_DROP
        order = np.lexsort((lower.col[keep], lower.row[keep]))
        return cls(
            n=int(matrix.shape[0]),
            rows=lower.row[keep][order].astype(np.int64),
            cols=lower.col[keep][order].astype(np.int64),
            vals=lower.data[keep][order].astype(float),
        )

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        lower = sp.coo_matrix((self.vals, (self.rows, self.cols)), shape=(self.n, self.n))
        strict = sp.tril(lower, k=-1)
        return (lower + strict.T).tocsr()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def combine(self, other: "SparseSym", alpha: float = 1.0, beta: float = 1.0) -> "SparseSym":
        """alpha * self + beta * other."""
        if other.n != self.n:
            raise ParameterError(f"dimension mismatch: {self.n} vs {other.n}")
        return SparseSym.from_matrix(alpha * self.matrix + beta * other.matrix)

    @property
    def nnz(self) -> int:
        return int(self.vals.shape[0])


@dataclass(frozen=True)
class EigSolution:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int
    converged: bool
    backward_error: float = float("nan")
    shift_updates: int = 0

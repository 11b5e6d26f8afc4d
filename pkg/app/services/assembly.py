import logging
import math
from typing import Callable

import numpy as np
import scipy.sparse as sp

from app.core.config import settings
from app.core.errors import AssemblyError, ParameterError, QuadratureError
from app.models.linalg import DofMap, SparseSym
from app.models.mesh import SimplicialMesh
from app.models.quadrature import RadialWeight, SingularWeight
from app.services.mesh import cell_jacobians
from app.services.quadrature import cell_integrals, ray_depth

logger = logging.getLogger(__name__)

FLAT = RadialWeight()


def dof_map(mesh: SimplicialMesh) -> DofMap:
    dof_vertices = np.flatnonzero(~mesh.boundary_vertex)
    vertex_to_dof = np.full(mesh.n_vertices, -1, dtype=np.int64)
    vertex_to_dof[dof_vertices] = np.arange(dof_vertices.size)
    return DofMap(dof_vertices=dof_vertices, vertex_to_dof=vertex_to_dof)


def ambient_dimension(mesh: SimplicialMesh, N: int | None) -> int:
    """N of the Hardy problem: 3 for ball meshes, the radial dimension (default 3) on intervals."""
    if mesh.dim == 3:
        if N not in (None, 3):
            raise ParameterError(f"ball meshes live in R^3, got N={N}")
        return 3
    N = 3 if N is None else int(N)
    if N < 3:
        raise ParameterError(f"Hardy forms need N >= 3, got N={N} (N = 2 is the critical case)")
    return N


def measure(mesh: SimplicialMesh, N: int | None) -> RadialWeight:
    """Volume element: r**(N-1) dr for radial interval meshes, dx otherwise."""
    if mesh.dim == 1 and N is not None:
        return RadialWeight(float(N) - 1.0)
    return FLAT


def gradients(mesh: SimplicialMesh) -> tuple[np.ndarray, np.ndarray]:
    """P1 basis gradients per cell (n_cells, dim + 1, dim) and cell volumes."""
    matrices, det = cell_jacobians(mesh)
    if np.any(det <= 0):
        raise AssemblyError("mesh has a non-positively oriented cell")
    inverse = np.linalg.inv(matrices)
    grads = np.concatenate([-inverse.sum(axis=1, keepdims=True), inverse], axis=1)
    return grads, det / math.factorial(mesh.dim)


def _scatter(mesh: SimplicialMesh, element: np.ndarray) -> SparseSym:
    dofs = dof_map(mesh)
    local = dofs.vertex_to_dof[mesh.cells]
    k = local.shape[1]
    rows = np.broadcast_to(local[:, :, None], (len(local), k, k))
    cols = np.broadcast_to(local[:, None, :], (len(local), k, k))
    keep = (rows >= 0) & (cols >= 0) & (rows >= cols)
    lower = sp.coo_matrix(
        (element[keep], (rows[keep], cols[keep])), shape=(dofs.n_dofs, dofs.n_dofs)
    ).tocsr()
    return SparseSym.from_matrix(lower)


def _checked(values: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise AssemblyError("non-finite element integral")
    return values


def weighted_volumes(mesh: SimplicialMesh, weight: RadialWeight, tol: float | None = None) -> np.ndarray:
    """Integral of weight(|x|) over every cell."""

    def density(_ids, _bary, phys):
        return weight(np.linalg.norm(phys, axis=1))[:, None]

    depth = ray_depth(weight, mesh.dim)
    return _checked(cell_integrals(mesh.cell_vertices(), density, tol=tol, depth=depth)[:, 0])


def weighted_products(mesh: SimplicialMesh, weight: RadialWeight, tol: float | None = None) -> np.ndarray:
    """Element matrices of weight(|x|) * phi_i * phi_j, shape (n_cells, dim + 1, dim + 1)."""
    k = mesh.dim + 1

    def density(_ids, bary, phys):
        w = weight(np.linalg.norm(phys, axis=1))
        return (w[:, None, None] * bary[:, :, None] * bary[:, None, :]).reshape(len(w), k * k)

    depth = ray_depth(weight, mesh.dim)
    return _checked(cell_integrals(mesh.cell_vertices(), density, tol=tol, depth=depth).reshape(-1, k, k))


def _stiffness_from(mesh: SimplicialMesh, weight: RadialWeight | None, tol) -> SparseSym:
    grads, volumes = gradients(mesh)
    if weight is not None:
        volumes = weighted_volumes(mesh, weight, tol)
    element = volumes[:, None, None] * np.einsum("cix,cjx->cij", grads, grads)
    return _scatter(mesh, element)


def _mass_from(mesh: SimplicialMesh, weight: RadialWeight | None, tol) -> SparseSym:
    if weight is None:
        _, volumes = gradients(mesh)
        k = mesh.dim + 1
        local = (np.ones((k, k)) + np.eye(k)) / (k * (k + 1))
        element = volumes[:, None, None] * local[None]
    else:
        try:
            element = weighted_products(mesh, weight, tol)
        except QuadratureError:
            logger.error("weighted mass failed on mesh level %d (weight %s)", mesh.level, weight)
            raise
    return _scatter(mesh, element)


def _radial(mesh: SimplicialMesh, kind: str, N: int, R: float | None) -> RadialWeight:
    weight = SingularWeight(kind, R=R or settings.LOG_RADIUS, N=N).radial()
    if mesh.dim == 1:
        weight = weight.times_power(N - 1.0)
    return weight


def assemble_stiffness(mesh: SimplicialMesh, N: int | None = None) -> SparseSym:
    """A: integral of grad u . grad v; with N on an interval mesh, against r**(N-1) dr."""
    weight = measure(mesh, N)
    return _stiffness_from(mesh, None if weight == FLAT else weight, None)


def assemble_mass(mesh: SimplicialMesh, N: int | None = None) -> SparseSym:
    weight = measure(mesh, N)
    return _mass_from(mesh, None if weight == FLAT else weight, None)


def assemble_hardy_mass(mesh: SimplicialMesh, N: int | None = None, tol: float | None = None) -> SparseSym:
    """W: integral of u v / |x|^2 (radial: r**(N-3) u v dr)."""
    N = ambient_dimension(mesh, N)
    return _mass_from(mesh, _radial(mesh, "inv_sq", N, None), tol)


def assemble_log_hardy_mass(
    mesh: SimplicialMesh, R: float | None = None, N: int | None = None, tol: float | None = None
) -> SparseSym:
    """Integral of u v / (|x|^2 log^2(R/|x|))."""
    N = ambient_dimension(mesh, N)
    return _mass_from(mesh, _radial(mesh, "inv_sq_logsq", N, R), tol)


def assemble_log_stiffness(
    mesh: SimplicialMesh, R: float | None = None, N: int | None = None, tol: float | None = None
) -> SparseSym:
    """Integral of grad u . grad v / log^2(R/|x|)."""
    N = ambient_dimension(mesh, N)
    return _stiffness_from(mesh, _radial(mesh, "logsq_inv", N, R), tol)


def assemble_mu_weighted(
    mesh: SimplicialMesh, N: int | None = None, tol: float | None = None
) -> tuple[SparseSym, SparseSym]:
    """Stiffness and mass for the weight |x|**-(N-2).

    On ball meshes N only sets the exponent (N = 2 gives the plain pair);
    on interval meshes it also sets the radial measure, leaving r dr for every N.
    """
    N = 3 if N is None else int(N)
    if N < 2:
        raise ParameterError(f"mu weight needs N >= 2, got N={N}")
    if mesh.dim == 3 and N == 2:
        return assemble_stiffness(mesh), assemble_mass(mesh)

    weight = SingularWeight("mu_weight", N=N).radial()
    if mesh.dim == 1:
        weight = weight.times_power(N - 1.0)
    return _stiffness_from(mesh, weight, tol), _mass_from(mesh, weight, tol)


def total_weight(mesh: SimplicialMesh, weight: SingularWeight, tol: float | None = None) -> float:
    """Integral of the weight over the whole meshed domain, boundary cells included."""
    radial = weight.radial()
    if mesh.dim == 1:
        radial = radial.times_power(weight.N - 1.0)
    return float(np.sum(weighted_volumes(mesh, radial, tol)))


def interpolate(mesh: SimplicialMesh, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Nodal values of f at the interior vertices, in dof order."""
    dofs = dof_map(mesh)
    points = mesh.vertices[dofs.dof_vertices]
    with np.errstate(all="ignore"):
        values = np.asarray(f(points), dtype=float).reshape(-1)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        vertex = int(dofs.dof_vertices[bad[0]])
        raise ParameterError(f"f is not finite at vertex {vertex} ({mesh.vertices[vertex]})")
    return values


def extend_by_zero(mesh: SimplicialMesh, x: np.ndarray) -> np.ndarray:
    """Vertex values of the P1 function with dof vector x (zero on the boundary)."""
    dofs = dof_map(mesh)
    if len(x) != dofs.n_dofs:
        raise ParameterError(f"vector of length {len(x)} does not match {dofs.n_dofs} dofs")
    values = np.zeros(mesh.n_vertices)
    values[dofs.dof_vertices] = x
    return values


def quadratic_form(Q: SparseSym, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (Q.n,):
        raise ParameterError(f"vector of shape {x.shape} does not match matrix of size {Q.n}")
    diagonal = Q.rows == Q.cols
    terms = np.concatenate([
        Q.vals[diagonal] * x[Q.rows[diagonal]] ** 2,
        2.0 * Q.vals[~diagonal] * x[Q.rows[~diagonal]] * x[Q.cols[~diagonal]],
    ])
    return math.fsum(terms)


def hardy_deficit(mesh: SimplicialMesh, x: np.ndarray, N: int | None = None) -> float:
    """Integral of |grad u|^2 minus the Hardy constant times the integral of u^2 / |x|^2."""
    N = ambient_dimension(mesh, N)
    stiffness = assemble_stiffness(mesh, N if mesh.dim == 1 else None)
    critical = (N - 2) ** 2 / 4.0
    return quadratic_form(stiffness, x) - critical * quadratic_form(assemble_hardy_mass(mesh, N), x)


def interpolation_errors(
    mesh: SimplicialMesh,
    u: Callable[[np.ndarray], np.ndarray],
    grad_u: Callable[[np.ndarray], np.ndarray],
    N: int | None = None,
    tol: float | None = None,
) -> tuple[float, float]:
    """L2 and energy-seminorm errors of the nodal interpolant over all vertices."""
    nodal = np.asarray(u(mesh.vertices), dtype=float).reshape(-1)
    grads, _ = gradients(mesh)
    coefficients = nodal[mesh.cells]
    interpolant_grad = np.einsum("ci,cix->cx", coefficients, grads)
    weight = measure(mesh, N)

    def density(ids, bary, phys):
        w = weight(np.linalg.norm(phys, axis=1))
        value = np.asarray(u(phys), dtype=float).reshape(-1) - np.einsum("pi,pi->p", bary, coefficients[ids])
        slope = np.asarray(grad_u(phys), dtype=float).reshape(len(ids), -1) - interpolant_grad[ids]
        return np.column_stack([w * value ** 2, w * np.sum(slope ** 2, axis=1)])

    totals = cell_integrals(mesh.cell_vertices(), density, tol=tol).sum(axis=0)
    return math.sqrt(totals[0]), math.sqrt(totals[1])

import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from app.core.config import settings
from app.core.errors import AssemblyError, FactorizationError, ParameterError
from app.models.linalg import EigSolution, SparseSym
from app.models.mesh import SimplicialMesh
from app.services import assembly
from app.services.analytic import hardy_const

logger = logging.getLogger(__name__)

SHIFT_FACTOR = 1e-8
NEGATIVE_TOLERANCE = 1e-9

# Rayleigh-quotient shift updates
RQ_SWITCH = 1e-4
RQ_MARGIN = 2.0
B_FLOOR_FACTOR = 4.0
MAX_SHIFT_UPDATES = 6


def _factorize(matrix: sp.spmatrix, what: str):
    """Symmetric-mode sparse LU without row pivoting; a non-positive pivot means not SPD."""
    try:
        lu = spla.splu(
            matrix.tocsc(),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise FactorizationError(f"{what} is singular: {exc}") from exc
    pivots = lu.U.diagonal()
    if np.any(pivots <= 0.0) or not np.all(np.isfinite(pivots)):
        raise FactorizationError(f"{what} is not positive definite")
    return lu


def normalize_sign(x: np.ndarray) -> np.ndarray:
    """Flip x so that its first nonzero component is positive."""
    scale = np.max(np.abs(x)) if x.size else 0.0
    nonzero = np.flatnonzero(np.abs(x) > 1e-14 * scale)
    if nonzero.size and x[nonzero[0]] < 0:
        return -x
    return x


def _shift_proposal(value: float, defect: float, b_floor: float) -> float:
    """A shift below the eigenvalue nearest to ``value``.

    ``defect / sqrt(b_floor)`` bounds the distance from the Rayleigh quotient
    to the nearest eigenvalue when ``b_floor`` underestimates the smallest
    eigenvalue of B.
    """
    return value - RQ_MARGIN * defect / np.sqrt(b_floor)


def smallest_genevp(
    Q: SparseSym,
    B: SparseSym,
    tol: float | None = None,
    max_iterations: int | None = None,
    accelerate: bool = True,
) -> EigSolution:
    """Smallest eigenpair of Q x = lambda B x by shift-invert inverse iteration.

    The first shift sigma = 1e-8 trace(B)/n keeps Q + sigma B definite for
    semidefinite Q. Once the backward error drops below RQ_SWITCH the shift
    follows the Rayleigh quotient from below: a candidate shift is accepted
    only if Q - shift B factorizes with positive pivots, so it never passes
    the smallest eigenvalue. Convergence needs the backward error below
    ``tol`` and the Rayleigh quotient to stagnate.
    """
    if Q.n != B.n:
        raise ParameterError(f"pencil dimensions differ: {Q.n} vs {B.n}")
    if Q.n == 0:
        raise ParameterError("empty pencil")
    tol = tol or settings.EIGEN_TOL
    max_iterations = max_iterations or settings.EIGEN_MAX_ITERATIONS
    stagnation = settings.EIGEN_STAGNATION_TOL

    q, b = Q.matrix, B.matrix
    _factorize(b, "B")
    sigma = SHIFT_FACTOR * b.diagonal().sum() / Q.n
    shifted = _factorize(q + sigma * b, "Q + sigma B")
    shift = -sigma
    q_norm = spla.norm(q, 1)
    b_norm = spla.norm(b, 1)
    b_floor = b.diagonal().min() / B_FLOOR_FACTOR

    x = np.ones(Q.n)
    x /= np.sqrt(x @ (b @ x))
    value = previous = x @ (q @ x)
    residual = backward = np.inf
    converged = False
    iteration = updates = 0
    switch = RQ_SWITCH

    for iteration in range(1, max_iterations + 1):
        y = shifted.solve(b @ x)
        x = y / np.sqrt(y @ (b @ y))
        qx, bx = q @ x, b @ x
        value = float(x @ qx)
        defect = np.linalg.norm(qx - value * bx)
        residual = defect / np.linalg.norm(bx)
        x_norm = np.linalg.norm(x)
        backward = defect / (q_norm * x_norm + abs(value) * b_norm * x_norm)
        if backward <= tol and abs(value - previous) <= stagnation * max(abs(value), 1.0):
            converged = True
            break
        previous = value

        if accelerate and backward <= switch and updates < MAX_SHIFT_UPDATES:
            candidate = _shift_proposal(value, defect, b_floor)
            if candidate - shift > 0.5 * (value - shift):
                try:
                    shifted = _factorize(q - candidate * b, "Q - shift B")
                    shift = candidate
                    updates += 1
                    logger.debug("iteration %d: shift moved to %.15g", iteration, shift)
                except FactorizationError:
                    # candidate passed an eigenvalue; wait for a smaller residual
                    switch = backward / 10.0

    if not converged:
        logger.warning(
            "inverse iteration stopped after %d steps (backward error %.3e)", iteration, backward
        )
    else:
        logger.debug(
            "inverse iteration converged in %d steps (%d shift updates), value=%.15g", iteration, updates, value
        )

    return EigSolution(
        value=value,
        vector=normalize_sign(x),
        residual=float(residual),
        iterations=iteration,
        converged=converged,
        backward_error=float(backward),
        shift_updates=updates,
    )


def dense_genevp(Q: SparseSym, B: SparseSym) -> tuple[float, np.ndarray]:
    """Reference smallest eigenpair from a dense full-spectrum solve."""
    if Q.n != B.n:
        raise ParameterError(f"pencil dimensions differ: {Q.n} vs {B.n}")
    values, vectors = sla.eigh(Q.matrix.toarray(), B.matrix.toarray())
    return float(values[0]), normalize_sign(vectors[:, 0])


def _radial_N(mesh: SimplicialMesh, N: int | None) -> int | None:
    return assembly.ambient_dimension(mesh, N) if mesh.dim == 1 else None


def hardy_constant(mesh: SimplicialMesh, N: int | None = None, tol: float | None = None) -> EigSolution:
    """Lambda_h: smallest eigenvalue of the pencil (A, W)."""
    radial = _radial_N(mesh, N)
    return smallest_genevp(
        assembly.assemble_stiffness(mesh, radial),
        assembly.assemble_hardy_mass(mesh, radial, tol),
    )


def _shifted_pencil(mesh, amplitude, radial, tol):
    stiffness = assembly.assemble_stiffness(mesh, radial)
    if amplitude:
        stiffness = stiffness.combine(assembly.assemble_hardy_mass(mesh, radial, tol), 1.0, -amplitude)
    return stiffness, assembly.assemble_mass(mesh, radial)


def guard_negative(solution: EigSolution, what: str) -> EigSolution:
    if solution.value < -NEGATIVE_TOLERANCE:
        raise AssemblyError(f"{what} has a negative Rayleigh quotient {solution.value:.3e}")
    return solution


def critical_eigen(mesh: SimplicialMesh, N: int | None = None, tol: float | None = None) -> EigSolution:
    """mu_1h: smallest eigenvalue of (A - Lambda_N W, M)."""
    radial = _radial_N(mesh, N)
    critical = hardy_const(assembly.ambient_dimension(mesh, radial))
    try:
        solution = smallest_genevp(*_shifted_pencil(mesh, critical, radial, tol))
    except FactorizationError as exc:
        raise AssemblyError(f"critical pencil is indefinite: {exc}") from exc
    return guard_negative(solution, "critical pencil")


def subcritical_eigen(
    mesh: SimplicialMesh, lambda_amp: float, N: int | None = None, tol: float | None = None
) -> EigSolution:
    """lambda_1h: smallest eigenvalue of (A - Lambda W, M) for 0 <= Lambda < Lambda_N."""
    radial = _radial_N(mesh, N)
    critical = hardy_const(assembly.ambient_dimension(mesh, radial))
    if not 0.0 <= lambda_amp < critical:
        raise ParameterError(
            f"amplitude must lie in [0, {critical}); use critical_eigen at the Hardy constant"
        )
    return guard_negative(smallest_genevp(*_shifted_pencil(mesh, lambda_amp, radial, tol)), "subcritical pencil")


def weighted_mu_eigen(mesh: SimplicialMesh, N: int | None = None, tol: float | None = None) -> EigSolution:
    """Smallest eigenvalue of the |x|**-(N-2) weighted pencil."""
    return smallest_genevp(*assembly.assemble_mu_weighted(mesh, N, tol))


def log_hardy_eigen(
    mesh: SimplicialMesh, N: int | None = None, R: float | None = None, tol: float | None = None
) -> EigSolution:
    """Smallest eigenvalue of (A - Lambda_N W, log-Hardy mass); tends to 1/4."""
    radial = _radial_N(mesh, N)
    critical = hardy_const(assembly.ambient_dimension(mesh, radial))
    deficit = assembly.assemble_stiffness(mesh, radial).combine(
        assembly.assemble_hardy_mass(mesh, radial, tol), 1.0, -critical
    )
    try:
        solution = smallest_genevp(deficit, assembly.assemble_log_hardy_mass(mesh, R, radial, tol))
    except FactorizationError as exc:
        raise AssemblyError(f"Hardy deficit form is indefinite: {exc}") from exc
    return guard_negative(solution, "log-Hardy pencil")


def improved_hardy_constant(
    mesh: SimplicialMesh, N: int | None = None, R: float | None = None, tol: float | None = None
) -> EigSolution:
    """Smallest eigenvalue of (A - Lambda_N W, L) with L the log-weighted stiffness."""
    radial = _radial_N(mesh, N)
    critical = hardy_const(assembly.ambient_dimension(mesh, radial))
    deficit = assembly.assemble_stiffness(mesh, radial).combine(
        assembly.assemble_hardy_mass(mesh, radial, tol), 1.0, -critical
    )
    return smallest_genevp(deficit, assembly.assemble_log_stiffness(mesh, R, radial, tol))

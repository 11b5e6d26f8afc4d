import logging

from app.core.errors import ParameterError
from app.models.linalg import EigSolution, SparseSym
from app.models.mesh import SimplicialMesh
from app.schemas.params import RadialProblem
from app.services import assembly, eigensolve
from app.services.analytic import hardy_const
from app.services.mesh import build_interval_mesh

logger = logging.getLogger(__name__)


def radial_assemble(problem: RadialProblem, mesh: SimplicialMesh, tol: float | None = None) -> tuple[SparseSym, SparseSym]:
    """Pencil of the requested quotient for radial functions, measure r**(N-1) dr."""
    if mesh.dim != 1:
        raise ParameterError("the radial oracle works on interval meshes")
    N = problem.N
    stiffness = assembly.assemble_stiffness(mesh, N)

    match problem.kind:
        case "hardy":
            return stiffness, assembly.assemble_hardy_mass(mesh, N, tol)
        case "critical" | "subcritical" | "log_hardy":
            amplitude = hardy_const(N) if problem.kind != "subcritical" else problem.lambda_amp
            if amplitude:
                stiffness = stiffness.combine(assembly.assemble_hardy_mass(mesh, N, tol), 1.0, -amplitude)
            if problem.kind == "log_hardy":
                return stiffness, assembly.assemble_log_hardy_mass(mesh, None, N, tol)
            return stiffness, assembly.assemble_mass(mesh, N)
        case "weighted_mu":
            return assembly.assemble_mu_weighted(mesh, N, tol)
        case _:
            raise ParameterError(f"unknown problem kind {problem.kind!r}")


def solve_on(problem: RadialProblem, mesh: SimplicialMesh, tol: float | None = None) -> EigSolution:
    solution = eigensolve.smallest_genevp(*radial_assemble(problem, mesh, tol))
    if problem.kind in ("critical", "subcritical", "log_hardy"):
        solution = eigensolve.guard_negative(solution, f"{problem.kind} pencil")
    return solution


def radial_solve(
    problem: RadialProblem, n_cells: int, grading: float = 1.0, tol: float | None = None
) -> EigSolution:
    return solve_on(problem, build_interval_mesh(n_cells, grading), tol)


def radial_rate_study(
    problem: RadialProblem, levels: list[int], grading: float = 1.0, tol: float | None = None
) -> list[tuple[float, float]]:
    """(h, value) per level; h is the largest cell length."""
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ParameterError("levels must be strictly increasing")
    table = []
    for n_cells in levels:
        mesh = build_interval_mesh(n_cells, grading)
        value = solve_on(problem, mesh, tol).value
        h = float((mesh.vertices[1:, 0] - mesh.vertices[:-1, 0]).max())
        logger.info("radial %s N=%d n=%d h=%.3e value=%.15g", problem.kind, problem.N, n_cells, h, value)
        table.append((h, value))
    return table

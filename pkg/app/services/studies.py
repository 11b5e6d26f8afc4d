import logging
import time
from functools import lru_cache

from app.core.config import settings
from app.core.errors import ParameterError
from app.models.linalg import EigSolution
from app.models.mesh import SimplicialMesh
from app.schemas.params import RadialProblem
from app.schemas.study import ExpectedRate, RateFit, StudyReport, StudyRow, StudySpec
from app.services import analytic, eigensolve, radial_oracle
from app.services.assembly import dof_map
from app.services.mesh import build_ball_mesh, build_interval_mesh, quality
from app.services.rates import band_ratio, fit_rate, log_offset, scale_errors

logger = logging.getLogger(__name__)

COUPLING_MU = 0.25


def reference_value(spec: StudySpec) -> float:
    match spec.kind:
        case "hardy":
            return analytic.hardy_const(spec.N)
        case "critical" | "weighted_mu":
            return analytic.critical_eigenvalue()
        case "subcritical":
            return analytic.subcritical_eigenvalue(spec.N, spec.lambda_amp)
        case "log_hardy":
            return 0.25
        case _:
            raise ParameterError(f"unknown problem kind {spec.kind!r}")


def expected_rate(spec: StudySpec) -> ExpectedRate:
    match spec.kind:
        case "hardy":
            return ExpectedRate(model="power_in_log", exponent=2.0)
        case "critical":
            return ExpectedRate(model="power_in_log", exponent=1.0)
        case "subcritical":
            m = analytic.subcritical_order(spec.N, spec.lambda_amp)
            model = analytic.subcritical_rate_model(spec.N, m)
            return ExpectedRate(model=model.model, exponent=model.exponent, log_factor=model.log_factor)
        case "weighted_mu":
            return ExpectedRate(model="power_in_h", exponent=2.0)
        case _:
            return ExpectedRate(model="power_in_log")


def build_level_mesh(spec: StudySpec, level: int) -> SimplicialMesh:
    if spec.domain == "radial":
        return build_interval_mesh(level, spec.grading)
    return build_ball_mesh(level, spec.boundary)


def _solve_ball(spec: StudySpec, mesh: SimplicialMesh) -> EigSolution:
    match spec.kind:
        case "hardy":
            return eigensolve.hardy_constant(mesh, tol=spec.tol)
        case "critical":
            return eigensolve.critical_eigen(mesh, tol=spec.tol)
        case "subcritical":
            return eigensolve.subcritical_eigen(mesh, spec.lambda_amp, tol=spec.tol)
        case "weighted_mu":
            return eigensolve.weighted_mu_eigen(mesh, tol=spec.tol)
        case "log_hardy":
            return eigensolve.log_hardy_eigen(mesh, tol=spec.tol)
    raise ParameterError(f"unknown problem kind {spec.kind!r}")


def mesh_size(mesh: SimplicialMesh) -> float:
    if mesh.dim == 1:
        nodes = mesh.vertices[mesh.cells, 0]
        return float((nodes[:, 1] - nodes[:, 0]).max())
    return quality(mesh).h


def solve_level(spec: StudySpec, level: int) -> StudyRow:
    started = time.perf_counter()
    mesh = build_level_mesh(spec, level)
    if spec.domain == "radial":
        solution = radial_oracle.solve_on(spec.problem(), mesh, spec.tol)
    else:
        solution = _solve_ball(spec, mesh)
    h = mesh_size(mesh)
    reference = reference_value(spec)
    error = solution.value - reference
    seconds = time.perf_counter() - started

    logger.info(
        "%s %s level=%d h=%.4e dofs=%d value=%.12g (%.2fs)",
        spec.domain, spec.kind, level, h, dof_map(mesh).n_dofs, solution.value, seconds,
    )
    if not solution.converged:
        logger.warning("level %d: eigensolver did not converge", level)
    row = StudyRow(
        level=level,
        h=h,
        dofs=dof_map(mesh).n_dofs,
        value=solution.value,
        reference=reference,
        error=error,
        seconds=seconds,
    )
    return scale_row(row, expected_rate(spec))


def scale_row(row: StudyRow, expected: ExpectedRate, offset: float = 0.0) -> StudyRow:
    """Attach the error scaled by the expected rate; rows with h >= 1 have no scaled error."""
    if expected.exponent is None or row.error is None or not 0.0 < row.h < 1.0:
        return row.model_copy(update={"scaled_error": None})
    scaled = scale_errors([row.h], [row.error], expected.model, expected.exponent, expected.log_factor, offset)[0]
    return row.model_copy(update={"scaled_error": float(scaled)})


@lru_cache(maxsize=8)
def hardy_log_offset(tol: float | None = None, levels: tuple[int, int] | None = None) -> float:
    """|log h| offset of Hardy errors, calibrated on two fine radial oracle levels (N = 3)."""
    levels = levels or tuple(settings.OFFSET_LEVELS[:2])
    problem = RadialProblem(N=3, kind="hardy")
    points = []
    for n in levels:
        solution = radial_oracle.solve_on(problem, build_interval_mesh(n), tol)
        points.append((1.0 / n, solution.value - analytic.hardy_const(3)))
    offset = log_offset(points[0], points[1])
    logger.info("calibrated |log h| offset %.4f from radial levels %s", offset, levels)
    return offset


def fit_rows(rows: list[StudyRow], expected: ExpectedRate) -> RateFit | None:
    """Fit the expected model over the levels with 0 < h < 1.

    Logarithmic fits keep the finest LOG_FIT_LEVELS levels with h <= LOG_FIT_MAX_H
    when at least three such levels exist.
    """
    points = [(row.h, row.error) for row in rows if row.error is not None and row.error > 0.0 and 0.0 < row.h < 1.0]
    if expected.model == "power_in_log":
        fine = sorted(p for p in points if p[0] <= settings.LOG_FIT_MAX_H)[: settings.LOG_FIT_LEVELS]
        if len(fine) >= 3:
            points = fine
    if len(points) < 3:
        return None
    return fit_rate(points, expected.model, expected.log_factor)


def _metadata(spec: StudySpec, rows: list[StudyRow], offset: float) -> dict:
    metadata = {
        "assembly_tol": spec.tol or settings.ASSEMBLY_TOL,
        "eigen_tol": settings.EIGEN_TOL,
        "log_radius": settings.LOG_RADIUS,
        "log_fit_max_h": settings.LOG_FIT_MAX_H,
        "log_fit_levels": settings.LOG_FIT_LEVELS,
        "log_offset": offset,
    }
    if spec.domain == "ball" and spec.kind == "hardy":
        metadata["coupling"] = {
            "mechanism": "eps^2 ~ h, beta = h^(mu/2); projection remainder ~ h^mu/|log h|",
            "mu": COUPLING_MU,
            "levels": {
                str(row.level): analytic.upper_bound_coupling(row.h, COUPLING_MU)
                for row in rows
                if 0.0 < row.h < 1.0
            },
        }
    return metadata


def _run_on_celery(spec: StudySpec) -> list[StudyRow]:
    from celery import group

    from app.celery_app import celery_app

    payload = spec.model_dump(mode="json")
    job = group(celery_app.signature("studies.solve_level", args=(payload, level)) for level in spec.levels)
    results = job.apply_async().get(disable_sync_subtasks=False)
    return [StudyRow.model_validate(result) for result in results]


def run_study(spec: StudySpec, executor: str | None = None) -> StudyReport:
    executor = executor or settings.STUDY_EXECUTOR
    logger.info("study %s/%s N=%d levels=%s via %s", spec.domain, spec.kind, spec.N, spec.levels, executor)

    if executor == "celery":
        rows = _run_on_celery(spec)
    elif executor == "local":
        rows = [solve_level(spec, level) for level in spec.levels]
    else:
        raise ParameterError(f"unknown executor {executor!r}")
    rows.sort(key=lambda row: row.level)

    expected = expected_rate(spec)
    offset = 0.0
    if spec.domain == "ball" and spec.kind == "hardy":
        offset = hardy_log_offset(spec.tol, tuple(settings.OFFSET_LEVELS[:2]))
    rows = [scale_row(row, expected, offset) for row in rows]
    fit = fit_rows(rows, expected)
    if fit is not None:
        logger.info("fitted %s exponent %.4f (r^2=%.4f)", fit.model, fit.exponent, fit.r_squared)
    return StudyReport(spec=spec, rows=rows, expected=expected, fit=fit, metadata=_metadata(spec, rows, offset))


def scaled_band(rows: list[StudyRow], last: int = 5) -> float:
    """max/min of the scaled errors over the finest ``last`` levels."""
    values = [row.scaled_error for row in rows[-last:] if row.scaled_error is not None]
    return band_ratio(values)

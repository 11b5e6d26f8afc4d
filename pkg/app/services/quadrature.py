import logging
import math
import warnings
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import roots_jacobi

from app.core.config import settings
from app.core.errors import ParameterError, QuadratureError
from app.models.mesh import ORIGIN_ATOL, AffineCellMap
from app.models.quadrature import QuadRule, RadialWeight, SingularWeight
from app.services.mesh import reference_children

logger = logging.getLogger(__name__)

# density(cell_ids, barycentric, physical) -> values of shape (P, k)
Density = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

# Embedded pair used by the adaptive engine (points per collapsed direction).
LOW_POINTS = 4
HIGH_POINTS = 5
PANEL_POINTS = 8
POINT_BUDGET = 200_000
MAX_ITEMS = 4_000_000

_ZIENKIEWICZ_A = 0.585410196624969
_ZIENKIEWICZ_B = 0.138196601125011
_SMALLEST = float(np.nextafter(0.0, 1.0))
# pair differences below this multiple of eps times the local magnitude are rounding
ROUNDOFF_FACTOR = 64.0 * float(np.finfo(float).eps)
# Gauss panel exactness limits the polynomial degree along a ray
MAX_RAY_DEGREE = 2 * PANEL_POINTS - 1


def _gauss_jacobi_unit(n: int, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1] for the weight (1 - u)**alpha."""
    if alpha == 0:
        x, w = np.polynomial.legendre.leggauss(n)
    else:
        x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def collapsed_rule(dim: int, n: int) -> QuadRule:
    """Conical product Gauss rule with n points per direction, exact to degree 2n - 1."""
    if dim == 1:
        u, w = _gauss_jacobi_unit(n, 0)
        points = np.column_stack([1.0 - u, u])
        return QuadRule(dim=1, points=points, weights=w, degree=2 * n - 1)

    axes = [_gauss_jacobi_unit(n, dim - 1 - i) for i in range(dim)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    weights = np.ones_like(grids[0])
    for i, (_, w) in enumerate(axes):
        shape = [1] * dim
        shape[i] = n
        weights = weights * w.reshape(shape)

    coords = []
    remaining = np.ones_like(grids[0])
    for g in grids:
        coords.append(remaining * g)
        remaining = remaining * (1.0 - g)
    cart = np.stack([c.ravel() for c in coords], axis=1)
    points = np.column_stack([1.0 - cart.sum(axis=1), cart])
    return QuadRule(dim=dim, points=points, weights=weights.ravel(), degree=2 * n - 1)


def simplex_rule(dim: int, degree: int) -> QuadRule:
    if dim not in (1, 2, 3):
        raise ParameterError(f"dim must be 1, 2 or 3, got {dim}")
    if not 1 <= degree <= 5:
        raise ParameterError(f"degree must lie in 1..5, got {degree}")

    ref_volume = 1.0 / math.factorial(dim)
    if degree == 1 and dim > 1:
        return QuadRule(
            dim=dim,
            points=np.full((1, dim + 1), 1.0 / (dim + 1)),
            weights=np.array([ref_volume]),
            degree=1,
        )
    if degree == 2 and dim == 3:
        a, b = _ZIENKIEWICZ_A, _ZIENKIEWICZ_B
        points = np.full((4, 4), b)
        np.fill_diagonal(points, a)
        return QuadRule(dim=3, points=points, weights=np.full(4, ref_volume / 4), degree=2)

    rule = collapsed_rule(dim, math.ceil((degree + 1) / 2))
    return QuadRule(dim=dim, points=rule.points, weights=rule.weights, degree=degree)


def integrate_smooth(cmap: AffineCellMap, f: Callable[[np.ndarray], np.ndarray], degree: int) -> float:
    rule = simplex_rule(cmap.dim, degree)
    phys = rule.points[:, 1:] @ cmap.matrix.T + cmap.offset
    return float(np.dot(rule.weights, np.asarray(f(phys), dtype=float)) * cmap.det_abs)


def grading_depth(tol: float) -> int:
    return max(4, math.ceil(2.0 * math.log2(1.0 / tol)))


def ray_depth(weight: RadialWeight, dim: int) -> int | None:
    """Panel depth 0 when weight times a P1 product is a polynomial along rays, else None.

    Along a ray from the origin the integrand of weight * phi_i * phi_j carries
    t**(power + dim - 1) times a quadratic, which one Gauss panel integrates
    exactly when the exponent is a small nonnegative integer.
    """
    if weight.log_power:
        return None
    degree = weight.power + dim - 1
    if degree < 0 or degree != int(degree) or degree + 2 > MAX_RAY_DEGREE:
        return None
    return 0


@lru_cache(maxsize=None)
def graded_unit_rule(depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss panels on [2**-(j+1), 2**-j] for j < depth plus a last panel [0, 2**-depth]."""
    x, w = _gauss_jacobi_unit(PANEL_POINTS, 0)
    nodes, weights = [], []
    for j in range(depth):
        a, b = 2.0 ** -(j + 1), 2.0 ** -j
        nodes.append(a + (b - a) * x)
        weights.append((b - a) * w)
    nodes.append(2.0 ** -depth * x)
    weights.append(2.0 ** -depth * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _rule_sums(integrand, ids, simplices, fractions, rule: QuadRule, budget: int):
    nq = rule.size
    per_chunk = max(1, budget // nq)
    signed, magnitude = [], []
    for start in range(0, len(ids), per_chunk):
        stop = start + per_chunk
        bary = np.einsum("qv,mvw->mqw", rule.points, simplices[start:stop])
        m = bary.shape[0]
        values = np.asarray(integrand(np.repeat(ids[start:stop], nq), bary.reshape(m * nq, -1)))
        values = values.reshape(m, nq, -1)
        w = rule.weights[None, :] * fractions[start:stop, None]
        signed.append(np.einsum("mq,mqk->mk", w, values))
        magnitude.append(np.einsum("mq,mqk->mk", w, np.abs(values)))
    return np.concatenate(signed), np.concatenate(magnitude)


def adaptive_integrate(
    dim: int,
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
    n_parents: int,
    tol: float,
    max_generations: int | None = None,
    budget: int = POINT_BUDGET,
) -> np.ndarray:
    """Integrate over the reference simplex of many parents at once.

    ``integrand(parent_ids, bary)`` returns (P, k) values that already carry
    the parent's Jacobian. Sub-simplices are red-refined until the embedded
    pair difference falls below ``tol`` times the larger of the parent's L1
    magnitude and the mean magnitude over all parents, prorated by the
    sub-simplex volume fraction. Differences at rounding level of the
    sub-simplex's own magnitude count as converged.
    """
    max_generations = max_generations or settings.QUADRATURE_MAX_GENERATIONS
    low, high = collapsed_rule(dim, LOW_POINTS), collapsed_rule(dim, HIGH_POINTS)
    children = reference_children(dim)
    n_children = children.shape[0]

    ids = np.arange(n_parents)
    simplices = np.broadcast_to(np.eye(dim + 1), (n_parents, dim + 1, dim + 1)).copy()
    fractions = np.ones(n_parents)
    total = scale = floor = None

    for generation in range(max_generations + 1):
        coarse, _ = _rule_sums(integrand, ids, simplices, fractions, low, budget // 2)
        fine, magnitude = _rule_sums(integrand, ids, simplices, fractions, high, budget // 2)
        if total is None:
            total = np.zeros((n_parents, fine.shape[1]))
            scale = magnitude.max(axis=1)
            floor = scale.sum() / n_parents

        error = np.abs(fine - coarse).max(axis=1)
        allowed = tol * np.maximum(scale[ids], floor) * fractions
        done = (error <= allowed) | (error <= ROUNDOFF_FACTOR * magnitude.max(axis=1))
        np.add.at(total, ids[done], fine[done])
        if done.all():
            return total

        remaining = ~done
        if generation == max_generations or remaining.sum() * n_children > MAX_ITEMS:
            pending = np.zeros_like(total)
            np.add.at(pending, ids[remaining], fine[remaining])
            raise QuadratureError(
                "adaptive quadrature budget exhausted",
                estimate=float((total + pending).sum()),
                error=float(error[remaining].sum()),
            )

        ids, simplices, fractions = ids[remaining], simplices[remaining], fractions[remaining]
        simplices = np.einsum("cuv,mvw->mcuw", children, simplices).reshape(-1, dim + 1, dim + 1)
        ids = np.repeat(ids, n_children)
        fractions = np.repeat(fractions, n_children) / n_children
        logger.debug("generation %d: %d sub-simplices pending", generation + 1, len(ids))


def _regular_cells(corners: np.ndarray, cell_ids: np.ndarray, density: Density, tol, max_generations):
    dim = corners.shape[2]
    det = np.abs(np.linalg.det(np.transpose(corners[:, 1:] - corners[:, :1], (0, 2, 1))))

    def integrand(ids, bary):
        phys = np.einsum("pv,pvx->px", bary, corners[ids])
        values = np.asarray(density(cell_ids[ids], bary, phys), dtype=float).reshape(len(ids), -1)
        return values * det[ids, None]

    return adaptive_integrate(dim, integrand, len(corners), tol, max_generations)


def _split_origin(corners: np.ndarray):
    dim = corners.shape[2]
    origin_local = np.argmin(np.linalg.norm(corners, axis=2), axis=1)
    others = np.array([[j for j in range(dim + 1) if j != o] for o in origin_local], dtype=np.int64)
    others = others.reshape(len(corners), dim)
    facet = np.take_along_axis(corners, others[:, :, None], axis=1)
    return origin_local, others, facet


def _origin_intervals(corners, cell_ids, density: Density, depth: int) -> np.ndarray:
    origin_local, others, facet = _split_origin(corners)
    t, tw = graded_unit_rule(depth)
    m, nt = len(corners), len(t)
    reach = facet[:, 0, 0]

    bary = np.zeros((m, nt, 2))
    np.put_along_axis(bary, others[:, None, :].repeat(nt, axis=1), t[None, :, None].repeat(m, axis=0), axis=2)
    np.put_along_axis(bary, origin_local[:, None, None].repeat(nt, axis=1), (1.0 - t)[None, :, None].repeat(m, axis=0), axis=2)
    phys = (t[None, :] * reach[:, None])[..., None]

    values = np.asarray(
        density(np.repeat(cell_ids, nt), bary.reshape(-1, 2), phys.reshape(-1, 1)), dtype=float
    ).reshape(m, nt, -1)
    return np.einsum("t,mtk->mk", tw, values) * np.abs(reach)[:, None]


def _origin_simplices(corners, cell_ids, density: Density, tol, max_generations, depth) -> np.ndarray:
    """x = t * y with y on the facet opposite the origin; dx = t**(d-1) |det facet| dt dy."""
    dim = corners.shape[2]
    origin_local, others, facet = _split_origin(corners)
    jac = np.abs(np.linalg.det(facet))
    t, tw = graded_unit_rule(depth)
    nt = len(t)
    t_weights = tw * t ** (dim - 1)

    def integrand(ids, mu):
        p = len(ids)
        y = np.einsum("pv,pvx->px", mu, facet[ids])
        phys = t[None, :, None] * y[:, None, :]
        bary = np.zeros((p, nt, dim + 1))
        np.put_along_axis(bary, others[ids][:, None, :].repeat(nt, axis=1), t[None, :, None] * mu[:, None, :], axis=2)
        np.put_along_axis(
            bary,
            origin_local[ids][:, None, None].repeat(nt, axis=1),
            np.broadcast_to((1.0 - t)[None, :, None], (p, nt, 1)),
            axis=2,
        )
        values = np.asarray(
            density(np.repeat(cell_ids[ids], nt), bary.reshape(-1, dim + 1), phys.reshape(-1, dim)),
            dtype=float,
        ).reshape(p, nt, -1)
        return np.einsum("t,ptk->pk", t_weights, values) * jac[ids, None]

    return adaptive_integrate(dim - 1, integrand, len(corners), tol, max_generations, POINT_BUDGET // nt * 2)


def cell_integrals(
    corners: np.ndarray,
    density: Density,
    tol: float | None = None,
    max_generations: int | None = None,
    depth: int | None = None,
) -> np.ndarray:
    """Integrals of ``density`` over each cell, shape (n_cells, k).

    Cells touching the origin are integrated along rays from the origin with
    geometrically graded panels; all others go through the adaptive engine.
    """
    tol = tol or settings.ASSEMBLY_TOL
    if depth is None:
        depth = grading_depth(tol)
    corners = np.asarray(corners, dtype=float)
    touches = (np.linalg.norm(corners, axis=2) <= ORIGIN_ATOL).any(axis=1)

    regular = np.flatnonzero(~touches)
    singular = np.flatnonzero(touches)
    parts = {}
    if regular.size:
        parts["regular"] = _regular_cells(corners[regular], regular, density, tol, max_generations)
    if singular.size:
        if corners.shape[2] == 1:
            parts["singular"] = _origin_intervals(corners[singular], singular, density, depth)
        else:
            parts["singular"] = _origin_simplices(corners[singular], singular, density, tol, max_generations, depth)

    k = next(iter(parts.values())).shape[1]
    result = np.zeros((len(corners), k))
    if regular.size:
        result[regular] = parts["regular"]
    if singular.size:
        result[singular] = parts["singular"]
    return result


def integrate_singular(
    cmap: AffineCellMap,
    weight: SingularWeight | RadialWeight,
    f: Callable[[np.ndarray], np.ndarray],
    tol: float | None = None,
    depth: int | None = None,
) -> float:
    """Integral of weight(|x|) * f(x) over one cell."""

    def density(_ids, _bary, phys):
        r = np.linalg.norm(phys, axis=1)
        return (weight(r) * np.asarray(f(phys), dtype=float))[:, None]

    value = cell_integrals(cmap.vertices()[None], density, tol=tol, depth=depth)[0, 0]
    if not np.isfinite(value):
        raise QuadratureError("non-finite cell integral", estimate=float(value))
    return float(value)


def radial_integrate(
    g: Callable[[float], float],
    a: float,
    b: float,
    k: float,
    tol: float = 1e-12,
) -> float:
    """Integral of g(r) * r**k over [a, b].

    With a == 0 the substitution r = b * exp(-s) moves the endpoint singularity
    to infinity.
    """
    if not (0.0 <= a < b):
        raise ParameterError(f"need 0 <= a < b, got a={a}, b={b}")

    if a == 0.0:
        def integrand(s):
            r = max(b * math.exp(-s), _SMALLEST)
            return g(r) * r ** (k + 1.0)

        lower, upper = 0.0, math.inf
    else:
        def integrand(r):
            return g(r) * r ** k

        lower, upper = a, b

    with warnings.catch_warnings(record=True) as caught, np.errstate(all="ignore"):
        warnings.simplefilter("always", IntegrationWarning)
        try:
            value, error = quad(integrand, lower, upper, epsabs=0.0, epsrel=tol, limit=500)
        except (OverflowError, ZeroDivisionError) as exc:
            raise QuadratureError(f"integrand overflow: {exc}") from exc

    flagged = any(issubclass(w.category, IntegrationWarning) for w in caught)
    if not (np.isfinite(value) and np.isfinite(error)):
        raise QuadratureError("nonintegrable endpoint", estimate=value, error=error)
    if flagged and error > 10.0 * tol * max(abs(value), 1e-300):
        raise QuadratureError("nonintegrable endpoint or tolerance not reached", estimate=value, error=error)
    return float(value)

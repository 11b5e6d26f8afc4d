import math

import numpy as np
import pytest

from app.core.errors import ParameterError, QuadratureError
from app.models.mesh import AffineCellMap
from app.models.quadrature import RadialWeight, SingularWeight
from app.services.analytic import octahedron_inv_sq_integral
from app.services.quadrature import (
    adaptive_integrate,
    cell_integrals,
    collapsed_rule,
    integrate_singular,
    integrate_smooth,
    radial_integrate,
    ray_depth,
    simplex_rule,
)

UNIT_TET = AffineCellMap(matrix=np.eye(3), offset=np.zeros(3), det_abs=1.0)


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5])
def test_weights_sum_to_reference_volume(dim, degree):
    rule = simplex_rule(dim, degree)
    assert rule.weights.sum() == pytest.approx(1.0 / math.factorial(dim), rel=1e-14)
    assert np.allclose(rule.points.sum(axis=1), 1.0)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5])
def test_tetrahedron_rules_integrate_monomials_exactly(degree):
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            c = degree - a - b
            exact = math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 3)
            value = integrate_smooth(UNIT_TET, lambda x: x[:, 0] ** a * x[:, 1] ** b * x[:, 2] ** c, degree)
            assert value == pytest.approx(exact, rel=1e-12)


def test_collapsed_rule_degree():
    assert collapsed_rule(3, 5).degree == 9
    assert collapsed_rule(2, 4).size == 16


@pytest.mark.parametrize("dim, degree", [(4, 2), (3, 0), (3, 6)])
def test_unsupported_rules(dim, degree):
    with pytest.raises(ParameterError):
        simplex_rule(dim, degree)


def test_adaptive_integrate_polynomial_in_one_generation():
    def integrand(ids, bary):
        return (bary[:, 1] ** 2 * bary[:, 2])[:, None] * (1.0 + ids[:, None])

    result = adaptive_integrate(3, integrand, n_parents=2, tol=1e-12)
    exact = 2.0 / math.factorial(6)
    assert result[:, 0] == pytest.approx([exact, 2.0 * exact], rel=1e-12)


def test_negligible_parent_is_accepted_against_the_mean_magnitude():
    def integrand(ids, bary):
        rough = np.where(ids == 1, 1e-30 * np.sqrt(bary[:, 1]), 1.0)
        return rough[:, None]

    result = adaptive_integrate(3, integrand, n_parents=2, tol=1e-12, max_generations=1)
    assert result[0, 0] == pytest.approx(1.0 / 6.0, rel=1e-12)
    assert 0.0 < result[1, 0] < 1e-30


def test_inverse_square_over_corner_tetrahedron():
    value = integrate_singular(UNIT_TET, SingularWeight("inv_sq"), lambda x: np.ones(len(x)))
    assert value == pytest.approx(octahedron_inv_sq_integral() / 8.0, rel=1e-8)


def test_singular_integral_stable_under_tolerance_halving():
    weight = SingularWeight("inv_sq")

    def f(x):
        return 1.0 + x[:, 0]

    coarse = integrate_singular(UNIT_TET, weight, f, tol=1e-6)
    fine = integrate_singular(UNIT_TET, weight, f, tol=5e-7)
    assert coarse == pytest.approx(fine, rel=1e-5)


def test_log_weight_vanishes_at_the_origin():
    weight = SingularWeight("inv_sq_logsq", R=math.e)
    value = integrate_singular(UNIT_TET, weight, lambda x: np.ones(len(x)))
    assert 0.0 < value < integrate_singular(UNIT_TET, SingularWeight("inv_sq"), lambda x: np.ones(len(x)))


def test_origin_interval_uses_graded_rule():
    corners = np.array([[[0.0], [0.5]]])
    weight = RadialWeight(-0.5)

    def density(_ids, _bary, phys):
        return weight(np.abs(phys[:, 0]))[:, None]

    value = cell_integrals(corners, density, tol=1e-10)[0, 0]
    assert value == pytest.approx(2.0 * math.sqrt(0.5), rel=1e-9)


def test_radial_integrate_endpoint_singularity():
    assert radial_integrate(lambda r: 1.0, 0.0, 1.0, -0.5) == pytest.approx(2.0, rel=1e-10)
    assert radial_integrate(lambda r: r, 0.5, 1.0, 0.0) == pytest.approx(0.375, rel=1e-12)


def test_radial_integrate_rejects_reversed_interval():
    with pytest.raises(ParameterError):
        radial_integrate(lambda r: 1.0, 1.0, 0.5, 0.0)


def test_radial_integrate_flags_nonfinite_integrand():
    with pytest.raises(QuadratureError):
        radial_integrate(lambda r: math.nan, 0.0, 1.0, 0.0)


def test_weight_rejects_small_log_radius():
    with pytest.raises(ParameterError):
        SingularWeight("inv_sq_logsq", R=0.5)


def test_radial_integrate_of_the_volume_element():
    assert radial_integrate(lambda r: 1.0, 0.0, 0.7, 2.0) == pytest.approx(0.7 ** 3 / 3.0, rel=1e-12)


def test_far_cell_matches_the_smooth_rule():
    cmap = AffineCellMap(matrix=0.1 * np.eye(3), offset=np.array([0.5, 0.3, 0.2]), det_abs=1e-3)

    def f(x):
        return 1.0 + x[:, 0] * x[:, 1]

    singular = integrate_singular(cmap, SingularWeight("inv_sq"), f, tol=1e-11)
    smooth = integrate_smooth(cmap, lambda x: f(x) / np.sum(x ** 2, axis=1), 5)
    assert singular == pytest.approx(smooth, rel=1e-4)


@pytest.mark.parametrize(
    "weight, dim, depth",
    [
        (RadialWeight(-2.0), 3, 0),
        (RadialWeight(0.0), 3, 0),
        (RadialWeight(2.0), 1, 0),
        (RadialWeight(-1.0), 1, None),
        (RadialWeight(-0.5), 3, None),
        (RadialWeight(-2.0, log_power=2, R=math.e), 3, None),
    ],
)
def test_ray_depth_only_for_polynomial_rays(weight, dim, depth):
    assert ray_depth(weight, dim) == depth


def test_polynomial_rays_need_no_grading():
    corners = np.array([[[0.0, 0.0, 0.0], [0.3, 0.0, 0.0], [0.0, 0.4, 0.0], [0.0, 0.0, 0.5]]])
    weight = RadialWeight(-2.0)

    def density(_ids, bary, phys):
        w = weight(np.linalg.norm(phys, axis=1))
        return (w[:, None] * bary[:, [0, 1]] * bary[:, [1, 2]])

    single = cell_integrals(corners, density, tol=1e-10, depth=ray_depth(weight, 3))
    graded = cell_integrals(corners, density, tol=1e-10)
    assert np.allclose(single, graded, rtol=1e-8)

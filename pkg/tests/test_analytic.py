import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.errors import ParameterError
from app.models.mesh import AffineCellMap
from app.schemas.params import CutoffParams
from app.services import analytic
from app.services.mesh import build_interval_mesh


def test_hardy_constants():
    assert [analytic.hardy_const(N) for N in (3, 4, 5)] == [0.25, 1.0, 2.25]
    with pytest.raises(ParameterError):
        analytic.hardy_const(2)


@pytest.mark.parametrize(
    "m, zero",
    [(0.0, 2.404825557695773), (0.5, math.pi), (1.0, 3.8317059702075125)],
)
def test_bessel_first_zeros(m, zero):
    assert analytic.bessel_first_zero(m) == pytest.approx(zero, rel=1e-13)
    assert abs(analytic.bessel_j(m, zero)) < 1e-14


def test_bessel_domain_checks():
    with pytest.raises(ParameterError):
        analytic.bessel_j(-1.0, 1.0)
    with pytest.raises(ParameterError):
        analytic.bessel_j(0.0, -1.0)
    with pytest.raises(ParameterError):
        analytic.bessel_first_zero(25.0)


def test_reference_eigenvalues():
    assert analytic.critical_eigenvalue() == pytest.approx(5.783185962946784, rel=1e-12)
    assert analytic.subcritical_eigenvalue(3, 0.0) == pytest.approx(math.pi ** 2, rel=1e-13)
    assert analytic.subcritical_order(3, 3.0 / 16.0) == pytest.approx(0.25)


def test_subcritical_eigenfunction_for_zero_potential():
    r = np.linspace(0.05, 0.95, 7)
    phi = analytic.phi1_subcritical(3, 0.0, r)
    ratio = phi / (np.sin(math.pi * r) / r)
    assert np.allclose(ratio, ratio[0], rtol=1e-12)
    assert abs(analytic.phi1_subcritical(3, 0.0, 1.0)) < 1e-14
    assert np.isfinite(analytic.phi1_subcritical(3, 0.0, 0.0))


def test_eigenfunction_derivative_matches_difference_quotient():
    r, step = 0.4, 1e-6
    numeric = (analytic.phi1_critical(3, r + step) - analytic.phi1_critical(3, r - step)) / (2 * step)
    assert analytic.phi1_critical_prime(3, r) == pytest.approx(numeric, rel=1e-7)


@pytest.mark.parametrize(
    "N, m, model, exponent, log_factor",
    [
        (3, 0.5, "power_in_h", 2.0, False),
        (3, 0.25, "power_in_h", 0.5, False),
        (4, 0.5, "power_in_h", 1.0, False),
        (4, 1.0, "power_in_h", 2.0, False),
        (5, 1.0, "power_in_h", 2.0, True),
        (5, 1.5, "power_in_h", 2.0, False),
    ],
)
def test_subcritical_rate_model(N, m, model, exponent, log_factor):
    rate = analytic.subcritical_rate_model(N, m)
    assert (rate.model, rate.exponent, rate.log_factor) == (model, pytest.approx(exponent), log_factor)


def test_upper_bound_coupling():
    coupling = analytic.upper_bound_coupling(1.0 / 16.0, 0.25)
    assert coupling["eps"] == pytest.approx(0.25)
    assert coupling["beta"] == pytest.approx((1.0 / 16.0) ** 0.125)
    with pytest.raises(ParameterError):
        analytic.upper_bound_coupling(2.0, 0.25)


def test_cutoff_support():
    p = CutoffParams(eps=2.0 ** -5, alpha=1.0)
    inner = p.eps ** (2.0 - p.mu)
    assert analytic.u_eps(p, 0.5 * inner) == 0.0
    assert analytic.u_eps(p, 0.6) == 0.0
    assert analytic.u_eps(p, 0.1) > 0.0
    assert analytic.cutoff_psi(0.1) == pytest.approx(1.0)


def test_cutoff_params_validation():
    with pytest.raises(ValidationError):
        CutoffParams(eps=0.5)
    with pytest.raises(ValidationError):
        CutoffParams(eps=0.01, mu=0.75)
    params = CutoffParams(eps=0.01)
    with pytest.raises(ValidationError):
        params.eps = 0.02
    assert hash(params) == hash(CutoffParams(eps=0.01))


def test_minseq_report_signs():
    report = analytic.minseq_report(CutoffParams(eps=2.0 ** -5, alpha=1.0), with_h2=True)
    assert report.B_eps > 0.0
    assert report.A_eps > 0.0
    assert 0.0 < report.ratio < 1.0
    assert report.h2_norm_sq > 0.0


def test_ratio_decreases_with_eps():
    ratios = [analytic.minseq_report(CutoffParams(eps=2.0 ** -k, alpha=1.0)).ratio for k in (4, 6, 8)]
    assert ratios[0] > ratios[1] > ratios[2]


def test_log_integral_predictor():
    result = analytic.log_integral(0.0, 1e-3)
    assert 0.5 < result.ratio < 2.0
    with pytest.raises(ParameterError):
        analytic.log_integral(-2.0, 0.1)


def test_octahedron_integral_bounds():
    value = analytic.octahedron_inv_sq_integral()
    assert 4.0 * math.pi / math.sqrt(3.0) < value < 4.0 * math.pi
    assert value == pytest.approx(analytic.octahedron_inv_sq_integral(120), rel=1e-10)


def test_best_affine_gradient_error_of_a_convex_function():
    cmap = AffineCellMap(matrix=0.1 * np.eye(3), offset=np.array([0.2, 0.0, 0.0]), det_abs=1e-3)

    def du(x):
        return x

    l2 = analytic.best_affine_gradient_error(cmap, du)
    l3 = analytic.best_affine_gradient_error(cmap, du, p_norm=3.0)
    assert l2 > 0.0 and l3 > 0.0
    with pytest.raises(ParameterError):
        analytic.best_affine_gradient_error(cmap, du, p_norm=1.0)


def test_hardy_minimizer_profile_is_singular_at_origin():
    with pytest.raises(ParameterError):
        analytic.hardy_minimizer_profile(3, 1.0, 0.0, 0.0)
    assert analytic.hardy_minimizer_profile(3, 1.0, 0.0, 0.25) == pytest.approx(2.0)


def test_cutoff_eta_ramps_between_the_two_scales():
    p = CutoffParams(eps=2.0 ** -6, mu=0.25)
    inner, outer = p.eps ** (2.0 - p.mu), p.eps ** (1.0 + p.mu)
    assert analytic.cutoff_eta(p, 0.5 * inner) == 0.0
    assert analytic.cutoff_eta(p, 2.0 * outer) == pytest.approx(1.0)
    ramp = analytic.cutoff_eta(p, np.geomspace(inner, outer, 9))
    assert np.all(np.diff(ramp) >= 0.0)


def test_log_integral_at_the_borderline_exponent():
    result = analytic.log_integral(-1.0, 1e-3)
    assert result.ratio == pytest.approx(1.0, rel=1e-8)
    assert result.value == pytest.approx(1.0 / math.log(1e3), rel=1e-8)


@pytest.mark.parametrize("nu, x", [(1.0, 0.7), (1.5, 2.3), (2.25, 5.0)])
def test_bessel_recurrence(nu, x):
    lhs = analytic.bessel_j(nu - 1.0, x) + analytic.bessel_j(nu + 1.0, x)
    assert lhs == pytest.approx(2.0 * nu / x * analytic.bessel_j(nu, x), rel=1e-12)


@pytest.mark.parametrize("N, lambda_amp", [(3, 0.0), (3, 3.0 / 16.0), (4, 0.5), (5, 1.0)])
def test_eigenfunction_solves_the_radial_equation(N, lambda_amp):
    lam = analytic.subcritical_eigenvalue(N, lambda_amp)
    step = 1e-5
    r = np.array([0.2, 0.45, 0.8])
    phi = analytic.phi1_subcritical(N, lambda_amp, r)
    d1 = analytic.phi1_subcritical_prime(N, lambda_amp, r)
    d2 = (
        analytic.phi1_subcritical_prime(N, lambda_amp, r + step)
        - analytic.phi1_subcritical_prime(N, lambda_amp, r - step)
    ) / (2.0 * step)
    residual = -d2 - (N - 1) / r * d1 - lambda_amp / r ** 2 * phi - lam * phi
    assert np.max(np.abs(residual)) < 1e-6 * np.max(np.abs(lam * phi))


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_u_eps_is_continuous_at_the_junctions(alpha):
    p = CutoffParams(eps=2.0 ** -5, alpha=alpha)
    junctions = [p.eps ** (2.0 - p.mu), p.eps ** (1.0 + p.mu), 0.25, 0.5]
    for r0 in junctions:
        below = analytic.u_eps_derivatives(p, r0 * (1.0 - 1e-9))
        above = analytic.u_eps_derivatives(p, min(r0 * (1.0 + 1e-9), 1.0))
        scale = analytic.u_eps_derivatives(p, np.geomspace(junctions[0], 0.5, 200))
        for lo, hi, values in zip(below[:2], above[:2], scale[:2]):
            assert abs(lo[0] - hi[0]) <= 1e-6 * np.max(np.abs(values))


@pytest.mark.parametrize("k", [4, 6, 8])
def test_cutoff_gradient_bound(k):
    p = CutoffParams(eps=2.0 ** -k)
    r = np.geomspace(p.eps ** (2.0 - p.mu), p.eps ** (1.0 + p.mu), 50)[1:-1]
    step = 1e-7
    slope = (analytic.cutoff_eta(p, r * (1.0 + step)) - analytic.cutoff_eta(p, r * (1.0 - step))) / (2.0 * step * r)
    # smoothstep slope peaks at 15/8 on a ramp of width (1 - 2 mu) |log eps|
    assert np.max(np.abs(slope) * r * np.abs(np.log(r))) <= 1.875 * 2.0 * (2.0 - p.mu) * (1.0 + 1e-4)


def test_best_approximation_error_on_a_fine_interval():
    def phi(x):
        return analytic.phi1_subcritical(3, 0.0, np.abs(x[:, 0]))

    def dphi(x):
        return analytic.phi1_subcritical_prime(3, 0.0, np.abs(x[:, 0]))[:, None]

    coarse = analytic.best_approx_error(build_interval_mesh(512), phi, dphi, "energy", N=3)
    fine = analytic.best_approx_error(build_interval_mesh(1024), phi, dphi, "energy", N=3)
    assert 1.8 <= coarse / fine <= 2.2

"""Closed-form and semi-analytic reference quantities.

Bessel functions and zeros, the first eigenfunctions on the unit ball, the
truncated minimising sequence u_eps with its energy integrals, and the
best-approximation errors used by the two-sided eigenvalue estimate.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
import scipy.sparse.linalg as spla
from scipy.integrate import quad
from scipy.optimize import brentq, minimize
from scipy.special import gamma, jv, jvp

from app.core.errors import ConvergenceError, ParameterError, QuadratureError
from app.models.mesh import AffineCellMap, SimplicialMesh
from app.schemas.analytic import MinSeqReport
from app.schemas.params import CutoffParams
from app.services import assembly
from app.services.quadrature import cell_integrals, collapsed_rule, radial_integrate

logger = logging.getLogger(__name__)

MAX_ORDER = 20.0
MAX_ARGUMENT = 100.0
NormKind = Literal["energy", "hardy_energy"]


@dataclass(frozen=True)
class LogIntegral:
    value: float
    predictor: float

    @property
    def ratio(self) -> float:
        return self.value / self.predictor


@dataclass(frozen=True)
class RateModel:
    model: Literal["power_in_h", "power_in_log"]
    exponent: float
    log_factor: bool = False


def hardy_const(N: int) -> float:
    if int(N) != N or N < 3:
        raise ParameterError(f"N must be an integer >= 3 (N = 2 is the critical case), got {N}")
    return (N - 2) ** 2 / 4.0


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / gamma(N / 2.0)


def bessel_j(m: float, x):
    if not 0.0 <= m <= MAX_ORDER:
        raise ParameterError(f"Bessel order must lie in [0, {MAX_ORDER}], got {m}")
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0.0) or np.any(xs > MAX_ARGUMENT) or not np.all(np.isfinite(xs)):
        raise ParameterError(f"Bessel argument must lie in [0, {MAX_ARGUMENT}]")
    value = jv(m, xs)
    return float(value) if np.ndim(value) == 0 else value


def _first_zero_guess(m: float) -> float:
    if m < 1.0:
        beta = (0.75 + 0.5 * m) * math.pi
        mu = 4.0 * m * m
        return beta - (mu - 1.0) / (8.0 * beta) - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * (8.0 * beta) ** 3)
    return m + 1.8557571 * m ** (1.0 / 3.0) + 1.033150 * m ** (-1.0 / 3.0)


def bessel_first_zero(m: float) -> float:
    if not 0.0 <= m <= MAX_ORDER:
        raise ParameterError(f"Bessel order must lie in [0, {MAX_ORDER}], got {m}")

    guess = _first_zero_guess(m)
    lo, hi = max(guess - 0.5, m, 1e-3), guess + 0.5
    if not (jv(m, lo) > 0.0 > jv(m, hi)):
        lo, step = max(m, 1e-3), 0.1
        hi = lo + step
        while jv(m, hi) > 0.0:
            lo, hi = hi, hi + step
            if hi > m + 20.0:
                raise ConvergenceError(f"could not bracket the first zero of J_{m}")
    return float(brentq(lambda x: jv(m, x), lo, hi, xtol=1e-15, rtol=4.0 * np.finfo(float).eps, maxiter=200))


def subcritical_order(N: int, lambda_amp: float) -> float:
    critical = hardy_const(N)
    if not 0.0 <= lambda_amp <= critical:
        raise ParameterError(f"amplitude must lie in [0, {critical}], got {lambda_amp}")
    return math.sqrt(critical - lambda_amp)


def subcritical_eigenvalue(N: int, lambda_amp: float) -> float:
    """lambda_1 = j_{m,1}^2 on the unit ball, m = sqrt(Lambda_N - Lambda)."""
    return bessel_first_zero(subcritical_order(N, lambda_amp)) ** 2


def critical_eigenvalue() -> float:
    """mu_1 = z_{0,1}^2, the same in every dimension."""
    return bessel_first_zero(0.0) ** 2


def _radius(r) -> np.ndarray:
    rs = np.asarray(r, dtype=float)
    if np.any(rs < 0.0) or np.any(rs > 1.0 + 1e-12):
        raise ParameterError("radius must lie in [0, 1]")
    return np.minimum(rs, 1.0)


def _scalar(value):
    return float(value) if np.ndim(value) == 0 else value


def phi1_subcritical(N: int, lambda_amp: float, r):
    """r**(1 - N/2) * J_m(j_{m,1} r), unnormalised."""
    m = subcritical_order(N, lambda_amp)
    zero = bessel_first_zero(m)
    rs = _radius(r)
    beta = 1.0 - N / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        value = rs ** beta * jv(m, zero * rs)
    at_origin = rs == 0.0
    if np.any(at_origin):
        order = m + beta
        limit = (zero / 2.0) ** m / gamma(m + 1.0) if order == 0.0 else (0.0 if order > 0 else np.inf)
        value = np.where(at_origin, limit, value)
    return _scalar(value)


def phi1_subcritical_prime(N: int, lambda_amp: float, r):
    m = subcritical_order(N, lambda_amp)
    zero = bessel_first_zero(m)
    rs = _radius(r)
    beta = 1.0 - N / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        value = beta * rs ** (beta - 1.0) * jv(m, zero * rs) + zero * rs ** beta * jvp(m, zero * rs)
    return _scalar(value)


def phi1_critical(N: int, r):
    """|x|**(-(N-2)/2) * J_0(z_{0,1} |x|)."""
    return phi1_subcritical(N, hardy_const(N), r)


def phi1_critical_prime(N: int, r):
    return phi1_subcritical_prime(N, hardy_const(N), r)


def hardy_minimizer_profile(N: int, a1: float, a2: float, r):
    """The formal radial minimiser r**(1 - N/2) * (a1 + a2 log r) of the Hardy quotient."""
    hardy_const(N)
    rs = np.asarray(r, dtype=float)
    if np.any(rs <= 0.0):
        raise ParameterError("the profile is singular at r = 0")
    return _scalar(rs ** (1.0 - N / 2.0) * (a1 + a2 * np.log(rs)))


def subcritical_rate_model(N: int, m: float) -> RateModel:
    """Predicted order of lambda_1h - lambda_1 for the subcritical problem."""
    top = (N - 2) / 2.0
    if not 0.0 < m <= top + 1e-12:
        raise ParameterError(f"order m must lie in (0, {top}] for N={N}, got {m}")
    if N == 3:
        return RateModel("power_in_h", 2.0 if math.isclose(m, 0.5) else 2.0 * m)
    if m < 1.0 and not math.isclose(m, 1.0):
        return RateModel("power_in_h", 2.0 * m)
    if N == 4 or not math.isclose(m, 1.0):
        return RateModel("power_in_h", 2.0)
    return RateModel("power_in_h", 2.0, log_factor=True)


def upper_bound_coupling(h: float, mu: float) -> dict:
    """Cutoff scales tied to the mesh size in the upper-bound construction."""
    if not 0.0 < h < 1.0:
        raise ParameterError(f"mesh size must lie in (0, 1), got {h}")
    if not 0.0 < mu < 0.5:
        raise ParameterError(f"mu must lie in (0, 1/2), got {mu}")
    return {
        "eps": math.sqrt(h),
        "beta": h ** (mu / 2.0),
        "remainder": h ** mu / abs(math.log(h)),
    }


# -- truncated minimising sequence ------------------------------------------


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x ** 2)


def _smoothstep_prime(x):
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 30.0 * x ** 2 * (1.0 - x) ** 2, 0.0)


def _smoothstep_second(x):
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x), 0.0)


def _xi_argument(p: CutoffParams, r):
    log_inv_eps = math.log(1.0 / p.eps)
    with np.errstate(divide="ignore"):
        tau = np.log(r / p.eps ** 2) / log_inv_eps
    return (tau - p.mu) / (1.0 - 2.0 * p.mu), log_inv_eps


def cutoff_eta(p: CutoffParams, r):
    """0 below eps**(2 - mu), 1 above eps**(1 + mu), C2 quintic ramp in log r between."""
    rs = _radius(r)
    x, _ = _xi_argument(p, rs)
    return _scalar(_smoothstep(x))


def _eta_derivatives(p: CutoffParams, rs):
    x, ell = _xi_argument(p, rs)
    scale = 1.0 / (1.0 - 2.0 * p.mu)
    d1 = _smoothstep_prime(x) * scale
    d2 = _smoothstep_second(x) * scale ** 2
    eta = _smoothstep(x)
    eta_p = d1 / (rs * ell)
    eta_pp = d2 / (rs * ell) ** 2 - d1 / (rs ** 2 * ell)
    return eta, eta_p, eta_pp


def cutoff_psi(r):
    """1 on r <= 1/4, 0 on r >= 1/2."""
    return _scalar(1.0 - _smoothstep(4.0 * np.asarray(r, dtype=float) - 1.0))


def _psi_derivatives(rs):
    x = 4.0 * rs - 1.0
    return 1.0 - _smoothstep(x), -4.0 * _smoothstep_prime(x), -16.0 * _smoothstep_second(x)


def _profile_derivatives(p: CutoffParams, rs):
    beta = 1.0 - p.N / 2.0
    a = p.alpha
    L = np.log(1.0 / rs)
    base = rs ** beta * L ** a
    d1 = rs ** (beta - 1.0) * (beta * L ** a - a * L ** (a - 1.0))
    d2 = rs ** (beta - 2.0) * (
        (beta - 1.0) * (beta * L ** a - a * L ** (a - 1.0))
        - beta * a * L ** (a - 1.0)
        + a * (a - 1.0) * L ** (a - 2.0)
    )
    return base, d1, d2


def u_eps_derivatives(p: CutoffParams, r) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """u_eps and its first two radial derivatives; all vanish outside (eps**(2-mu), 1/2)."""
    rs = np.atleast_1d(_radius(r)).astype(float)
    low = p.eps ** (2.0 - p.mu)
    support = (rs > low) & (rs < 0.5)
    out = [np.zeros_like(rs) for _ in range(3)]
    if np.any(support):
        s = rs[support]
        u, u1, u2 = _profile_derivatives(p, s)
        e, e1, e2 = _eta_derivatives(p, s)
        q, q1, q2 = _psi_derivatives(s)
        out[0][support] = u * e * q
        out[1][support] = u1 * e * q + u * e1 * q + u * e * q1
        out[2][support] = (
            u2 * e * q + u * e2 * q + u * e * q2
            + 2.0 * (u1 * e1 * q + u1 * e * q1 + u * e1 * q1)
        )
    return tuple(out)


def u_eps(p: CutoffParams, r):
    value = u_eps_derivatives(p, r)[0]
    return float(value[0]) if np.ndim(r) == 0 else value


def _support_breaks(p: CutoffParams) -> list[float]:
    """Support of u_eps split at the cutoff plateaus and then geometrically by factors of 2."""
    corners = [p.eps ** (2.0 - p.mu), p.eps ** (1.0 + p.mu), 0.25, 0.5]
    breaks = [corners[0]]
    for a, b in zip(corners, corners[1:]):
        pieces = max(1, math.ceil(math.log2(b / a)))
        breaks.extend(a * (b / a) ** (np.arange(1, pieces + 1) / pieces))
    return breaks


def _support_integral(p: CutoffParams, g: Callable[[float], float], k: float, tol: float) -> float:
    breaks = _support_breaks(p)
    return math.fsum(radial_integrate(g, a, b, k, tol) for a, b in zip(breaks, breaks[1:]))


def minseq_report(p: CutoffParams, tol: float = 1e-10, with_h2: bool = False) -> MinSeqReport:
    critical = hardy_const(p.N)
    omega = sphere_area(p.N)

    def deficit(r):
        u, u1, _ = u_eps_derivatives(p, r)
        return float(u1[0] ** 2 - critical * u[0] ** 2 / r ** 2)

    def weighted_square(r):
        return float(u_eps_derivatives(p, r)[0][0] ** 2)

    a_eps = omega * _support_integral(p, deficit, p.N - 1.0, tol)
    b_eps = omega * _support_integral(p, weighted_square, p.N - 3.0, tol)
    logger.debug("minseq eps=%g alpha=%g: A=%.6e B=%.6e", p.eps, p.alpha, a_eps, b_eps)
    return MinSeqReport(
        eps=p.eps,
        mu=p.mu,
        alpha=p.alpha,
        N=p.N,
        A_eps=a_eps,
        B_eps=b_eps,
        ratio=a_eps / b_eps,
        quadrature_tol=tol,
        h2_norm_sq=h2_norm_sq(p, tol) if with_h2 else None,
    )


def h2_norm_sq(p: CutoffParams, tol: float = 1e-10) -> float:
    """Squared Hessian norm of the radial function u_eps over R^N."""

    def hessian(r):
        _, u1, u2 = u_eps_derivatives(p, r)
        return float(u2[0] ** 2 + (p.N - 1.0) * u1[0] ** 2 / r ** 2)

    return sphere_area(p.N) * _support_integral(p, hessian, p.N - 1.0, tol)


def log_integral(alpha: float, h: float, tol: float = 1e-12) -> LogIntegral:
    """Integral of r**alpha / log(r)**2 over (0, h) and its small-h predictor.

    Integrated in s = log(h / r), where the integrand
    h**(alpha + 1) exp(-(alpha + 1) s) / (|log h| + s)**2 has no underflow at the origin.
    """
    if alpha < -1.0:
        raise ParameterError(f"the integral diverges for alpha < -1, got {alpha}")
    if not 0.0 < h <= 0.5:
        raise ParameterError(f"h must lie in (0, 1/2], got {h}")

    log_h = abs(math.log(h))

    def integrand(s):
        return math.exp(-(alpha + 1.0) * s) / (log_h + s) ** 2

    value, error = quad(integrand, 0.0, math.inf, epsabs=0.0, epsrel=tol, limit=500)
    if not math.isfinite(value) or error > 1e6 * tol * abs(value):
        raise QuadratureError("log integral did not converge", estimate=value, error=error)
    predictor = 1.0 / log_h if alpha == -1.0 else h ** (alpha + 1.0) / log_h ** 2
    return LogIntegral(value=h ** (alpha + 1.0) * value, predictor=predictor)



def octahedron_inv_sq_integral(n_points: int = 200) -> float:
    """Integral of |x|**-2 over {|x|_1 <= 1}: the sphere integral of 1/|w|_1 on a Gauss grid."""
    x, w = np.polynomial.legendre.leggauss(n_points)
    nodes, weights = 0.25 * math.pi * (x + 1.0), 0.25 * math.pi * w
    theta, phi = np.meshgrid(nodes, nodes, indexing="ij")
    sin_t = np.sin(theta)
    integrand = sin_t / (sin_t * (np.cos(phi) + np.sin(phi)) + np.cos(theta))
    return 8.0 * float(weights @ integrand @ weights)


# -- approximation errors --------------------------------------------------


def best_affine_gradient_error(
    cmap: AffineCellMap,
    du: Callable[[np.ndarray], np.ndarray],
    p_norm: float = 2.0,
    restarts: int = 4,
) -> float:
    """min over constant vectors A of the integral of |Du - A|^p over the cell."""
    if p_norm <= 1.0:
        raise ParameterError(f"p must exceed 1, got {p_norm}")

    rule = collapsed_rule(cmap.dim, 6)
    phys = rule.points[:, 1:] @ cmap.matrix.T + cmap.offset
    values = np.asarray(du(phys), dtype=float).reshape(rule.size, cmap.dim)
    weights = rule.weights * cmap.det_abs
    mean = weights @ values / weights.sum()

    if p_norm == 2.0:
        return float(weights @ np.sum((values - mean) ** 2, axis=1))

    def objective(a):
        z = values - a
        norm = np.linalg.norm(z, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(norm > 0.0, norm ** (p_norm - 2.0), 0.0)
        return float(weights @ norm ** p_norm), -p_norm * (weights * scale) @ z

    spread = np.max(np.abs(values - mean)) + 1e-300
    rng = np.random.default_rng(0)
    best = None
    for attempt in range(restarts):
        start = mean if attempt == 0 else mean + spread * rng.uniform(-1.0, 1.0, cmap.dim)
        result = minimize(objective, start, jac=True, method="BFGS", options={"gtol": 1e-12})
        if result.success or result.status == 2:
            if best is None or result.fun < best.fun:
                best = result
    if best is None:
        raise ConvergenceError(f"affine gradient fit did not converge for p={p_norm}")
    return float(best.fun)


def best_approx_error(
    mesh: SimplicialMesh,
    f: Callable[[np.ndarray], np.ndarray],
    grad_f: Callable[[np.ndarray], np.ndarray],
    norm: NormKind = "energy",
    N: int | None = None,
    tol: float | None = None,
) -> float:
    """Distance from f to the P1 space in the energy or Hardy-energy norm.

    The projection solves the Galerkin system of the norm's form. The
    Hardy-energy error is integrated in its ground-state form
    |grad e + (N - 2)/2 * e x/|x|^2|^2, which stays finite for targets as
    singular as the critical eigenfunction.
    """
    if norm not in ("energy", "hardy_energy"):
        raise ParameterError(f"unknown norm {norm!r}")
    radial_N = N if mesh.dim == 1 else None
    if mesh.dim == 1 and norm == "hardy_energy" and radial_N is None:
        radial_N = 3
    weight = assembly.measure(mesh, radial_N)
    dim = mesh.dim
    grads, _ = assembly.gradients(mesh)
    corners = mesh.cell_vertices()

    def f_values(phys):
        return np.asarray(f(phys), dtype=float).reshape(-1)

    def grad_values(phys):
        return np.asarray(grad_f(phys), dtype=float).reshape(len(phys), dim)

    if norm == "energy":
        galerkin = assembly.assemble_stiffness(mesh, radial_N)
        critical = 0.0
    else:
        critical = hardy_const(assembly.ambient_dimension(mesh, radial_N))
        galerkin = assembly.assemble_stiffness(mesh, radial_N).combine(
            assembly.assemble_hardy_mass(mesh, radial_N, tol), 1.0, -critical
        )

    def load_density(_ids, bary, phys):
        r = np.linalg.norm(phys, axis=1)
        w = weight(r)
        flux = w[:, None] * grad_values(phys)
        if critical == 0.0:
            return flux
        reaction = (w * f_values(phys) / r ** 2)[:, None] * bary
        return np.hstack([flux, reaction])

    local = cell_integrals(corners, load_density, tol=tol)
    element = np.einsum("cax,cx->ca", grads, local[:, :dim])
    if critical:
        element = element - critical * local[:, dim:]

    dofs = assembly.dof_map(mesh)
    owners = dofs.vertex_to_dof[mesh.cells]
    keep = owners >= 0
    rhs = np.bincount(owners[keep], weights=element[keep], minlength=dofs.n_dofs)
    coefficients = spla.spsolve(galerkin.matrix.tocsc(), rhs)
    nodal = assembly.extend_by_zero(mesh, np.atleast_1d(coefficients))[mesh.cells]
    slope = np.einsum("ca,cax->cx", nodal, grads)
    shift = (assembly.ambient_dimension(mesh, radial_N) - 2) / 2.0 if critical else 0.0

    def error_density(ids, bary, phys):
        r = np.linalg.norm(phys, axis=1)
        de = grad_values(phys) - slope[ids]
        if shift:
            e = f_values(phys) - np.einsum("pa,pa->p", bary, nodal[ids])
            de = de + (shift * e / r ** 2)[:, None] * phys
        return (weight(r) * np.sum(de ** 2, axis=1))[:, None]

    total = float(cell_integrals(corners, error_density, tol=tol).sum())
    return math.sqrt(max(total, 0.0))

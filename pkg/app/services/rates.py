import math
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import linregress

from app.core.errors import ParameterError
from app.schemas.study import RateFit, RateModelName


def rate_abscissa(h: np.ndarray, model: RateModelName) -> np.ndarray:
    match model:
        case "power_in_h":
            return np.log(h)
        case "power_in_log":
            return np.log(np.abs(np.log(h)))
        case _:
            raise ParameterError(f"unknown rate model {model!r}")


def scale_errors(
    h,
    errors,
    model: RateModelName,
    exponent: float,
    log_factor: bool = False,
    log_offset: float = 0.0,
) -> list[float]:
    """e * h**-p (divided by |log h| with ``log_factor``) or e * (|log h| + offset)**p."""
    h = np.asarray(h, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if model == "power_in_h":
        scaled = errors * h ** -exponent
        if log_factor:
            scaled = scaled / np.abs(np.log(h))
        return list(scaled)
    return list(errors * (np.abs(np.log(h)) + log_offset) ** exponent)


def fit_rate(
    points: Sequence[tuple[float, float]],
    model: RateModelName = "power_in_h",
    log_factor: bool = False,
) -> RateFit:
    """Least-squares fit of e = C h**p (optionally times |log h|) or e = C |log h|**-p.

    The exponent is the slope of log e against log h, and the negated slope
    against log|log h|, so both models report p > 0 for converging errors.
    """
    if len(points) < 3:
        raise ParameterError(f"a rate fit needs at least 3 points, got {len(points)}")
    h = np.array([p[0] for p in points], dtype=float)
    errors = np.array([p[1] for p in points], dtype=float)
    if np.any(errors <= 0.0) or not np.all(np.isfinite(errors)):
        raise ParameterError("rate fits need positive finite errors")
    if np.any(h <= 0.0) or np.any(h >= 1.0):
        raise ParameterError("mesh sizes must lie in (0, 1)")
    if len(np.unique(h)) != len(h):
        raise ParameterError("mesh sizes must be distinct")
    if log_factor and model != "power_in_h":
        raise ParameterError("the |log h| factor only applies to power_in_h fits")

    target = np.log(errors)
    if log_factor:
        target = target - np.log(np.abs(np.log(h)))
    result = linregress(rate_abscissa(h, model), target)
    exponent = float(result.slope) if model == "power_in_h" else -float(result.slope)
    return RateFit(
        model=model,
        exponent=exponent,
        constant=math.exp(result.intercept),
        r_squared=min(1.0, float(result.rvalue) ** 2),
        h=list(h),
        scaled_residuals=scale_errors(h, errors, model, exponent, log_factor),
    )


def band_ratio(values: Iterable[float]) -> float:
    """max/min of positive values; inf if any value is not positive."""
    values = np.asarray(list(values), dtype=float)
    if values.size == 0 or np.any(values <= 0.0):
        return math.inf
    return float(values.max() / values.min())


def log_offset(coarse: tuple[float, float], fine: tuple[float, float]) -> float:
    """Offset a with e ~ C / (|log h| + a)**2 through two (h, e) points; 0 when they do not decrease."""
    (h1, e1), (h2, e2) = coarse, fine
    if e1 <= 0.0 or e2 <= 0.0:
        return 0.0
    s = math.sqrt(e1 / e2)
    if s <= 1.0:
        return 0.0
    a = (abs(math.log(h2)) - s * abs(math.log(h1))) / (s - 1.0)
    return max(a, 0.0)

from dataclasses import dataclass
from typing import Literal

import numpy as np

from app.core.errors import ParameterError

WeightKind = Literal["inv_sq", "inv_sq_logsq", "logsq_inv", "mu_weight"]


@dataclass(frozen=True)
class QuadRule:
    """Rule on the reference simplex; points are barycentric, weights sum to 1/dim!."""

    dim: int
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])


@dataclass(frozen=True)
class RadialWeight:
    """w(r) = r**power / log(R / r)**log_power, evaluated at r = |x|."""

    power: float = 0.0
    log_power: int = 0
    R: float = 1.0

    def __post_init__(self):
        if self.R < 1.0:
            raise ParameterError(f"log radius R must be >= 1, got {self.R}")

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = r ** self.power if self.power else np.ones_like(r)
            if self.log_power:
                value = value / np.log(self.R / r) ** self.log_power
        return value

    def times_power(self, extra: float) -> "RadialWeight":
        return RadialWeight(self.power + extra, self.log_power, self.R)


@dataclass(frozen=True)
class SingularWeight:
    kind: WeightKind
    R: float = 1.0
    N: int = 3

    def __post_init__(self):
        if self.R < 1.0:
            raise ParameterError(f"log radius R must be >= 1, got {self.R}")
        if self.N < 2:
            raise ParameterError(f"dimension N must be >= 2, got {self.N}")

    def radial(self) -> RadialWeight:
        match self.kind:
            case "inv_sq":
                return RadialWeight(-2.0, 0, self.R)
            case "inv_sq_logsq":
                return RadialWeight(-2.0, 2, self.R)
            case "logsq_inv":
                return RadialWeight(0.0, 2, self.R)
            case "mu_weight":
                return RadialWeight(-(self.N - 2.0), 0, self.R)
            case _:
                raise ParameterError(f"unknown weight kind {self.kind!r}")

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.radial()(r)

from typing import Optional

from pydantic import BaseModel, model_validator


class MinSeqReport(BaseModel):
    eps: float
    mu: float
    alpha: float
    N: int
    A_eps: float
    B_eps: float
    ratio: float
    quadrature_tol: float
    h2_norm_sq: Optional[float] = None

    @model_validator(mode="after")
    def _signs(self):
        if self.B_eps <= 0:
            raise ValueError("B_eps must be positive")
        if self.A_eps < -self.quadrature_tol * max(abs(self.A_eps), self.B_eps):
            raise ValueError("A_eps is negative beyond the quadrature tolerance")
        return self

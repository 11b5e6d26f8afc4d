from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

ProblemKind = Literal["hardy", "critical", "subcritical", "weighted_mu", "log_hardy"]


class CutoffParams(BaseModel):
    """Parameters of the truncated profile u_eps = u2 * eta_eps * psi."""

    eps: float = Field(gt=0.0, lt=0.25)
    mu: float = Field(default=0.25, gt=0.0, lt=0.5)
    alpha: float = Field(default=0.0, ge=0.0)
    N: int = Field(default=3, ge=3)

    model_config = ConfigDict(frozen=True)


class RadialProblem(BaseModel):
    N: int = Field(default=3, ge=3)
    lambda_amp: float = Field(default=0.0, ge=0.0)
    kind: ProblemKind = "hardy"

    @model_validator(mode="after")
    def _amplitude_matches_kind(self):
        critical = (self.N - 2) ** 2 / 4.0
        if self.kind == "subcritical" and not self.lambda_amp < critical:
            raise ValueError(
                f"subcritical problems need 0 <= lambda_amp < {critical}; use kind='critical' at the Hardy constant"
            )
        if self.lambda_amp > critical:
            raise ValueError(f"lambda_amp must not exceed the Hardy constant {critical}")
        return self

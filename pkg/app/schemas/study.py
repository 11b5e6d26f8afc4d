from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from app.schemas.params import ProblemKind, RadialProblem

RateModelName = Literal["power_in_h", "power_in_log"]


class StudySpec(BaseModel):
    kind: ProblemKind = "hardy"
    domain: Literal["radial", "ball"] = "radial"
    N: int = Field(default=3, ge=3)
    lambda_amp: float = Field(default=0.0, ge=0.0)
    levels: List[int] = Field(min_length=1)
    boundary: Literal["projected", "polyhedral"] = "projected"
    grading: float = Field(default=1.0, ge=1.0)
    tol: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _consistent(self):
        if self.domain == "ball" and self.N != 3:
            raise ValueError("ball studies are three-dimensional (N = 3)")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")
        smallest = 2 if self.domain == "radial" else 0
        if self.levels[0] < smallest:
            raise ValueError(f"{self.domain} levels start at {smallest}")
        self.problem()
        return self

    def problem(self) -> RadialProblem:
        return RadialProblem(N=self.N, lambda_amp=self.lambda_amp, kind=self.kind)


class StudyRow(BaseModel):
    level: int
    h: float
    dofs: int
    value: float
    reference: Optional[float] = None
    error: Optional[float] = None
    scaled_error: Optional[float] = None
    seconds: float = 0.0


class RateFit(BaseModel):
    model: RateModelName
    exponent: float
    constant: float
    r_squared: float = Field(ge=0.0, le=1.0)
    h: List[float]
    scaled_residuals: List[float]

    @model_validator(mode="after")
    def _enough_points(self):
        if len(self.h) < 3:
            raise ValueError("a rate fit needs at least three levels")
        return self


class ExpectedRate(BaseModel):
    model: RateModelName
    exponent: Optional[float] = None
    log_factor: bool = False


class StudyReport(BaseModel):
    spec: StudySpec
    rows: List[StudyRow]
    expected: Optional[ExpectedRate] = None
    fit: Optional[RateFit] = None
    metadata: Dict[str, Any] = {}

    @model_validator(mode="after")
    def _h_decreasing(self):
        hs = [row.h for row in self.rows]
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValueError("h must decrease strictly with the level")
        return self

from .params import CutoffParams, RadialProblem
from .study import ExpectedRate, RateFit, StudyReport, StudyRow, StudySpec
from .verify import LemmaCheck, VerificationReport
from .analytic import MinSeqReport

__all__ = [
    "CutoffParams",
    "RadialProblem",
    "ExpectedRate",
    "RateFit",
    "StudyReport",
    "StudyRow",
    "StudySpec",
    "LemmaCheck",
    "VerificationReport",
    "MinSeqReport",
]

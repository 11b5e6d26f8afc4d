from typing import Dict, List

from pydantic import BaseModel


class LemmaCheck(BaseModel):
    name: str
    passed: bool
    detail: str = ""
    constants: Dict[str, float] = {}


class VerificationReport(BaseModel):
    checks: List[LemmaCheck]
    passed: bool

    @classmethod
    def collect(cls, checks: List[LemmaCheck]) -> "VerificationReport":
        return cls(checks=checks, passed=all(check.passed for check in checks))

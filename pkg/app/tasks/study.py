from typing import List, Optional

from app.celery_app import celery_app
from app.core.logging import configure_logging
from app.schemas.study import StudySpec
from app.services.lemmas import verify_lemmas
from app.services.studies import run_study, solve_level


def _spec(spec_in: dict | StudySpec) -> StudySpec:
    if isinstance(spec_in, dict):
        return StudySpec.model_validate(spec_in)
    return spec_in


@celery_app.task(name="studies.run")
def run_study_task(spec_in: dict | StudySpec) -> dict:
    configure_logging()
    # levels run inside this worker; fanning out again would wait on sibling tasks
    report = run_study(_spec(spec_in), executor="local")
    return report.model_dump(mode="json")


@celery_app.task(name="studies.solve_level")
def solve_level_task(spec_in: dict | StudySpec, level: int) -> dict:
    return solve_level(_spec(spec_in), int(level)).model_dump(mode="json")


@celery_app.task(name="studies.verify")
def verify_task(selection: Optional[List[str]] = None, quick: bool = False) -> dict:
    configure_logging()
    return verify_lemmas(selection, quick=quick).model_dump(mode="json")

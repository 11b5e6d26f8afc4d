from typing import List, Optional

from celery.result import AsyncResult
from fastapi import APIRouter, HTTPException
from pydantic import BaseModel

from app.celery_app import celery_app
from app.core.errors import HardyFEMError
from app.schemas import StudyReport, StudySpec, VerificationReport
from app.services.lemmas import CHECKS
from app.services.studies import reference_value


router = APIRouter()


class VerifyRequest(BaseModel):
    selection: Optional[List[str]] = None
    quick: bool = True


@router.post("/studies", status_code=202)
async def queue_study(spec: StudySpec) -> dict:
    try:
        reference_value(spec)
    except HardyFEMError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    task = celery_app.send_task("studies.run", args=[spec.model_dump(mode="json")])
    return {"message": "Study queued", "task_id": task.id}


@router.get("/studies/{task_id}")
async def study_status(task_id: str) -> dict:
    result = AsyncResult(task_id, app=celery_app)
    body: dict = {"task_id": task_id, "state": result.state}
    if result.successful():
        payload = result.result
        if "rows" in payload:
            body["report"] = StudyReport.model_validate(payload).model_dump(mode="json")
        else:
            body["report"] = VerificationReport.model_validate(payload).model_dump(mode="json")
    elif result.failed():
        body["error"] = str(result.result)
    return body


@router.post("/verify", status_code=202)
async def queue_verification(request: VerifyRequest) -> dict:
    unknown = [name for name in request.selection or [] if name not in CHECKS]
    if unknown:
        raise HTTPException(status_code=422, detail=f"unknown checks: {', '.join(unknown)}")
    task = celery_app.send_task("studies.verify", args=[request.selection, request.quick])
    return {"message": "Verification queued", "task_id": task.id}

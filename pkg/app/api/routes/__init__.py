from fastapi import APIRouter

from . import health, studies


api_router = APIRouter()
api_router.include_router(health.router, tags=["health"])
api_router.include_router(studies.router, tags=["studies"])

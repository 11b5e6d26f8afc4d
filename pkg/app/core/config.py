import math
from functools import lru_cache
from typing import List, Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_ignore_empty=True,
        case_sensitive=False,
        extra='ignore',
    )

    PROJECT_NAME: str = "Hardy FEM Study API"
    ENV: str = "development"

    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(levelname)-5.5s [%(name)s] %(message)s"

    # Numerics
    ASSEMBLY_TOL: float = Field(default=1e-10, gt=0, lt=1e-2)
    QUADRATURE_MAX_GENERATIONS: int = Field(default=40, ge=1)
    EIGEN_TOL: float = Field(default=1e-10, gt=0)
    EIGEN_STAGNATION_TOL: float = Field(default=1e-13, gt=0)
    EIGEN_MAX_ITERATIONS: int = Field(default=2000, ge=1)
    LOG_RADIUS: float = Field(default=math.e, ge=1.0)

    # Study schedules
    RADIAL_LEVELS: List[int] = [2 ** k for k in range(6, 15)]
    BALL_LEVELS: List[int] = [1, 2, 3, 4]
    LOG_FIT_MAX_H: float = 1.0 / 64.0
    LOG_FIT_LEVELS: int = Field(default=5, ge=3)
    # radial Hardy levels used to calibrate the |log h| offset of ball studies
    OFFSET_LEVELS: List[int] = [2 ** 10, 2 ** 12]

    STUDY_EXECUTOR: Literal["local", "celery"] = "local"
    OUTPUT_DIR: str = "reports"

    REDIS_URL: str = "redis://localhost:6379/0"
    CELERY_BROKER_URL: str | None = None
    CELERY_RESULT_BACKEND: str | None = None

    BACKEND_CORS_ORIGINS: List[str] = [
        "http://localhost:5173",
        "http://localhost:8080",
        "http://127.0.0.1:5173",
        "http://127.0.0.1:8080",
    ]

    @field_validator("LOG_LEVEL")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        return value.upper()

    @property
    def celery_broker(self) -> str:
        return str(self.CELERY_BROKER_URL or self.REDIS_URL)

    @property
    def celery_backend(self) -> str:
        return str(self.CELERY_RESULT_BACKEND or self.REDIS_URL)


@lru_cache
def get_settings() -> Settings:
    return Settings()


settings = get_settings()

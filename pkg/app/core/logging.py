import logging

from app.core.config import settings


def configure_logging(level: str | None = None) -> None:
    """Install the console handler used by the CLI, the API and the worker."""
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format=settings.LOG_FORMAT,
        datefmt="%H:%M:%S",
        force=True,
    )

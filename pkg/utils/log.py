"""Shared loguru configuration."""

from __future__ import annotations

import sys
from pathlib import Path

from loguru import logger

DEFAULT_FMT = "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {message}"
JOB_FMT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level:<8} | {extra[job_id]} | {message}"


def setup_logging(
    verbose: bool = False,
    fmt: str = DEFAULT_FMT,
    colorize: bool = True,
) -> None:
    """Remove existing loguru handlers and add a single stderr handler.

    Args:
        verbose: Use DEBUG level when True, INFO otherwise.
        fmt: Loguru format string.
        colorize: Enable ANSI colour codes.
    """
    logger.remove()
    level = "DEBUG" if verbose else "INFO"
    logger.add(sys.stderr, level=level, format=fmt, colorize=colorize)


def add_job_log(path: Path, job_id: str) -> int:
    """Attach a file sink that only receives records bound to *job_id*.

    Returns the handler id; pass it to :func:`remove_job_log` when the job ends.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    return logger.add(
        path,
        level="DEBUG",
        format=JOB_FMT,
        filter=lambda record: record["extra"].get("job_id") == job_id,
        enqueue=False,
    )


def remove_job_log(handler_id: int) -> None:
    try:
        logger.remove(handler_id)
    except ValueError:
        pass

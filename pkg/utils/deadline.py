"""Cooperative wall-clock limits and cancellation for long computations.

A :class:`Deadline` is installed for the current thread with
:func:`deadline_scope`; training loops call :func:`checkpoint` between
epochs/iterations and stop promptly once the limit passes or the job is
cancelled. Outside a scope ``checkpoint`` is a no-op.
"""

from __future__ import annotations

import contextvars
import threading
import time
from contextlib import contextmanager
from typing import Iterator

from utils.errors import AnomalyServiceError


class JobExpired(AnomalyServiceError):
    code = "expired"


class JobCancelled(AnomalyServiceError):
    code = "cancelled"


class Deadline:
    def __init__(self, limit_seconds: float | None, cancel_event: threading.Event | None = None) -> None:
        self.limit_seconds = limit_seconds
        self.started = time.monotonic()
        self.cancel_event = cancel_event or threading.Event()

    @property
    def elapsed(self) -> float:
        return time.monotonic() - self.started

    def expired(self) -> bool:
        return self.limit_seconds is not None and self.elapsed > self.limit_seconds

    def check(self, stage: str = "") -> None:
        if self.cancel_event.is_set():
            raise JobCancelled(f"cancelled during {stage or 'execution'}")
        if self.expired():
            raise JobExpired(f"wall-clock limit {self.limit_seconds:g}s", stage=stage)


_current: contextvars.ContextVar[Deadline | None] = contextvars.ContextVar("deadline", default=None)


@contextmanager
def deadline_scope(deadline: Deadline) -> Iterator[Deadline]:
    token = _current.set(deadline)
    try:
        yield deadline
    finally:
        _current.reset(token)


def checkpoint(stage: str = "") -> None:
    deadline = _current.get()
    if deadline is not None:
        deadline.check(stage)

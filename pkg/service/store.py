"""On-disk job store: one directory per job under the store root.

Layout of ``<root>/<job id>/``::

    request.json      normalized request body (inline data removed)
    status.json       the Job record
    payload.csv       inline data_file, if any
    recent.csv        inline recent_data, if any
    result.csv        ScoreSeries of a succeeded job
    attribution.json  per-row attribution of a succeeded multivariate job
    summary.json      endpoint summary of a succeeded job
    model.json        fitted model of a succeeded job
    job.log           the job's own log

Every write goes to a temporary file first and is moved into place, and all
status mutations go through one lock.
"""

from __future__ import annotations

import json
import math
import os
import threading
import uuid
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

from loguru import logger

from service.errors import InvalidTransition, NotFound

QUEUED = "queued"
RUNNING = "running"
SUCCEEDED = "succeeded"
FAILED = "failed"
CANCELLED = "cancelled"
EXPIRED = "expired"
STATES = (QUEUED, RUNNING, SUCCEEDED, FAILED, CANCELLED, EXPIRED)
TERMINAL = frozenset({SUCCEEDED, FAILED, CANCELLED, EXPIRED})

TRANSITIONS: dict[str, frozenset[str]] = {
    QUEUED: frozenset({RUNNING, CANCELLED}),
    RUNNING: frozenset({SUCCEEDED, FAILED, CANCELLED, EXPIRED}),
}

REQUEST_FILE = "request.json"
STATUS_FILE = "status.json"
PAYLOAD_FILE = "payload.csv"
RECENT_FILE = "recent.csv"
RESULT_FILE = "result.csv"
ATTRIBUTION_FILE = "attribution.json"
SUMMARY_FILE = "summary.json"
MODEL_FILE = "model.json"
LOG_FILE = "job.log"


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def write_atomic(path: Path, data: bytes | str) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    if isinstance(data, str):
        data = data.encode("utf-8")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def json_safe(obj: Any) -> Any:
    """Replace non-finite floats with None so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, Mapping):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def write_json(path: Path, obj: Any) -> None:
    write_atomic(path, json.dumps(json_safe(obj), indent=2, ensure_ascii=False, allow_nan=False) + "\n")


@dataclass(frozen=True)
class Job:
    id: str
    endpoint: str
    state: str
    submitted_at: str
    instance_size: str
    limits: Mapping[str, Any] = field(default_factory=dict)
    seq: int = 0
    started_at: str | None = None
    finished_at: str | None = None
    result: str | None = None
    reason: str | None = None

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Job:
        required = ["id", "endpoint", "state", "submitted_at", "instance_size"]
        missing = [f for f in required if not d.get(f)]
        if missing:
            raise ValueError(f"missing required job fields: {', '.join(missing)}")
        return cls(
            id=d["id"],
            endpoint=d["endpoint"],
            state=d["state"],
            submitted_at=d["submitted_at"],
            instance_size=d["instance_size"],
            limits=dict(d.get("limits") or {}),
            seq=int(d.get("seq", 0)),
            started_at=d.get("started_at"),
            finished_at=d.get("finished_at"),
            result=d.get("result"),
            reason=d.get("reason"),
        )


class JobStore:
    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._seq = max((job.seq for job in self._scan()), default=0)

    def job_dir(self, job_id: str) -> Path:
        if not job_id or "/" in job_id or job_id.startswith("."):
            raise NotFound(f"no job {job_id!r}")
        return self.root / job_id

    def _scan(self) -> list[Job]:
        jobs = []
        for status in self.root.glob(f"*/{STATUS_FILE}"):
            try:
                jobs.append(Job.from_dict(json.loads(status.read_text())))
            except (OSError, ValueError) as e:
                logger.warning(f"skipping unreadable job record {status}: {e}")
        return jobs

    def create(self, endpoint: str, request: Mapping[str, Any], instance_size: str,
               limits: Mapping[str, Any], payload: bytes | None = None,
               recent: bytes | None = None) -> Job:
        with self._lock:
            self._seq += 1
            job = Job(id=uuid.uuid4().hex, endpoint=endpoint, state=QUEUED, submitted_at=now_iso(),
                      instance_size=instance_size, limits=dict(limits), seq=self._seq)
            path = self.job_dir(job.id)
            path.mkdir(parents=True)
            write_json(path / REQUEST_FILE, dict(request))
            if payload is not None:
                write_atomic(path / PAYLOAD_FILE, payload)
            if recent is not None:
                write_atomic(path / RECENT_FILE, recent)
            write_json(path / STATUS_FILE, job.to_dict())
        logger.debug(f"job {job.id} queued for {endpoint}")
        return job

    def load(self, job_id: str) -> Job:
        path = self.job_dir(job_id) / STATUS_FILE
        with self._lock:
            if not path.is_file():
                raise NotFound(f"no job {job_id!r}")
            return Job.from_dict(json.loads(path.read_text()))

    def list(self) -> list[Job]:
        """Every job, oldest submission first."""
        with self._lock:
            return sorted(self._scan(), key=lambda j: j.seq)

    def transition(self, job_id: str, state: str, **fields: Any) -> Job:
        """Move *job_id* to *state*, stamping start/finish times.

        Raises InvalidTransition when the lifecycle does not allow the move.
        """
        with self._lock:
            job = self.load(job_id)
            if state not in TRANSITIONS.get(job.state, frozenset()):
                raise InvalidTransition(f"job {job_id} cannot go from {job.state} to {state}",
                                        current=job.state, requested=state)
            stamp = now_iso()
            if state == RUNNING:
                fields.setdefault("started_at", stamp)
            if state in TERMINAL:
                fields.setdefault("finished_at", stamp)
            job = replace(job, state=state, **fields)
            write_json(self.job_dir(job_id) / STATUS_FILE, job.to_dict())
        logger.debug(f"job {job_id} -> {state}")
        return job

    def request(self, job_id: str) -> dict[str, Any]:
        return json.loads((self.job_dir(job_id) / REQUEST_FILE).read_text())

    def read_bytes(self, job_id: str, name: str) -> bytes | None:
        path = self.job_dir(job_id) / name
        return path.read_bytes() if path.is_file() else None

    def read_json(self, job_id: str, name: str) -> Any:
        raw = self.read_bytes(job_id, name)
        return None if raw is None else json.loads(raw)

    def log_path(self, job_id: str) -> Path:
        return self.job_dir(job_id) / LOG_FILE

"""Job admission, execution and recovery.

At most ``max_jobs`` jobs may be queued or running at once; a submission
beyond that is rejected with CapacityExceeded. Admitted jobs run FIFO on a
thread pool of ``workers`` threads. Each run gets a cooperative Deadline
(instance wall-clock cap) and a cancel event; a timer marks a job expired
even when the work is between checkpoints.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Mapping

from loguru import logger

from service import store as st
from service.config import ServiceConfig
from service.errors import CapacityExceeded, InvalidTransition, NotReady
from service.limits import job_seconds
from service.objstore import fetch_object
from service.pipeline import read_input, run_detection
from service.schema import DetectionRequest, validate_request
from service.store import Job, JobStore
from utils.deadline import Deadline, JobCancelled, JobExpired, deadline_scope
from utils.errors import AnomalyServiceError
from utils.log import add_job_log, remove_job_log

INTERRUPTED = "interrupted"


def expiry_reason(limit_seconds: float) -> str:
    return f"wall-clock limit {limit_seconds:g}s"


class JobManager:
    def __init__(self, config: ServiceConfig, store: JobStore | None = None,
                 fetch: Callable[..., bytes] = fetch_object,
                 sleep: Callable[[float], None] = time.sleep) -> None:
        self.config = config
        self.store = store or JobStore(config.store_dir)
        self._fetch = fetch
        self._sleep = sleep
        self._lock = threading.Lock()
        self._active: set[str] = set()
        self._cancel: dict[str, threading.Event] = {}
        self._executor: ThreadPoolExecutor | None = None
        for job in self.store.list():
            if job.state in (st.QUEUED, st.RUNNING):
                self._active.add(job.id)

    @property
    def active_count(self) -> int:
        with self._lock:
            return len(self._active)

    def start(self) -> None:
        """Recover persisted jobs and begin executing the queue."""
        if self._executor is not None:
            return
        self._executor = ThreadPoolExecutor(max_workers=self.config.workers, thread_name_prefix="adservice-job")
        queued = self.recover()
        for job_id in queued:
            self._executor.submit(self._run, job_id)
        logger.info(f"job manager started with {self.config.workers} workers, {len(queued)} queued jobs resumed")

    def shutdown(self, wait: bool = True) -> None:
        if self._executor is None:
            return
        with self._lock:
            for event in self._cancel.values():
                event.set()
        self._executor.shutdown(wait=wait, cancel_futures=True)
        self._executor = None

    def recover(self) -> list[str]:
        """Fail jobs left running by a previous process; return queued ids, oldest first."""
        queued = []
        for job in self.store.list():
            if job.state == st.RUNNING and job.id not in self._cancel:
                self.store.transition(job.id, st.FAILED, reason=INTERRUPTED)
                with self._lock:
                    self._active.discard(job.id)
                logger.warning(f"job {job.id} was running at shutdown, marked failed")
            elif job.state == st.QUEUED:
                queued.append(job.id)
        return queued

    def submit(self, endpoint: str, payload: Mapping[str, Any]) -> Job:
        """Validate and enqueue; returns the queued Job without waiting."""
        req = validate_request(endpoint, payload, allow_local_paths=self.config.allow_local_paths)
        size = self.config.size(req.instance_size)
        limits = {**size.to_dict(), "max_seconds": job_seconds(size, req.evaluation_time, self.config.max_job_seconds)}
        inline = req.data_ref.text.encode("utf-8") if req.data_ref.kind == "inline" else None
        recent = None
        if req.recent_data is not None and req.recent_data.kind == "inline":
            recent = req.recent_data.text.encode("utf-8")
        with self._lock:
            if len(self._active) >= self.config.max_jobs:
                raise CapacityExceeded(f"{len(self._active)} jobs queued or running, limit {self.config.max_jobs}",
                                       limit=self.config.max_jobs)
            job = self.store.create(endpoint, req.to_dict(), req.instance_size, limits, inline, recent)
            self._active.add(job.id)
        logger.info(f"job {job.id} submitted to {endpoint}")
        if self._executor is not None:
            self._executor.submit(self._run, job.id)
        return job

    def get(self, job_id: str) -> Job:
        return self.store.load(job_id)

    def result(self, job_id: str) -> bytes:
        job = self.store.load(job_id)
        if job.state != st.SUCCEEDED:
            raise NotReady(f"job {job_id} is {job.state}", state=job.state)
        data = self.store.read_bytes(job_id, st.RESULT_FILE)
        if data is None:
            raise NotReady(f"job {job_id} has no result file")
        return data

    def cancel(self, job_id: str) -> Job:
        """Cancel a queued or running job; terminal jobs are returned unchanged."""
        job = self.store.load(job_id)
        if job.state == st.QUEUED:
            try:
                job = self.store.transition(job_id, st.CANCELLED, reason="cancelled before start")
            except InvalidTransition:
                job = self.store.load(job_id)
            else:
                with self._lock:
                    self._active.discard(job_id)
                logger.info(f"job {job_id} cancelled")
        if job.state == st.RUNNING:
            with self._lock:
                event = self._cancel.get(job_id)
            if event is not None:
                event.set()
                logger.info(f"job {job_id} cancel requested")
        return job

    def _request(self, job_id: str) -> tuple[DetectionRequest, bytes, bytes | None]:
        body = self.store.request(job_id)
        endpoint = body.pop("endpoint")
        payload = self.store.read_bytes(job_id, st.PAYLOAD_FILE)
        recent = self.store.read_bytes(job_id, st.RECENT_FILE)
        if body.get("data_file") == {"inline": True}:
            body["data_file"] = (payload or b"").decode("utf-8")
        if body.get("recent_data") == {"inline": True}:
            body["recent_data"] = (recent or b"").decode("utf-8")
        if body.get("evaluation_time") is None:
            body.pop("evaluation_time", None)
        req = validate_request(endpoint, body, allow_local_paths=True)
        size = self.config.size(req.instance_size)
        data = read_input(req.data_ref, size, self.config, fetch=self._fetch, sleep=self._sleep)
        recent_bytes = None
        if req.recent_data is not None:
            recent_bytes = read_input(req.recent_data, size, self.config, fetch=self._fetch, sleep=self._sleep)
        return req, data, recent_bytes

    def _finish(self, job_id: str, state: str, **fields: Any) -> None:
        try:
            self.store.transition(job_id, state, **fields)
        except InvalidTransition as e:
            # the expiry timer or a cancel got there first
            logger.debug(f"job {job_id}: {e.message}")

    def _expire(self, job_id: str, limit: float, event: threading.Event) -> None:
        try:
            self.store.transition(job_id, st.EXPIRED, reason=expiry_reason(limit))
        except InvalidTransition:
            return
        event.set()
        logger.bind(job_id=job_id).warning(f"job expired after {limit:g}s")

    def _run(self, job_id: str) -> None:
        event = threading.Event()
        with self._lock:
            self._cancel[job_id] = event
        try:
            job = self.store.transition(job_id, st.RUNNING)
        except (InvalidTransition, AnomalyServiceError):
            with self._lock:
                self._cancel.pop(job_id, None)
            return

        limit = float(job.limits.get("max_seconds", self.config.max_job_seconds))
        handler = add_job_log(self.store.log_path(job_id), job_id)
        timer = threading.Timer(limit, self._expire, args=(job_id, limit, event))
        timer.daemon = True
        timer.start()
        try:
            with logger.contextualize(job_id=job_id), deadline_scope(Deadline(limit, event)):
                logger.info(f"job started on {job.endpoint}, limit {limit:g}s")
                try:
                    req, data, recent = self._request(job_id)
                    size = self.config.size(req.instance_size)
                    outcome = run_detection(req, data, size, recent)
                    outcome.write(self.store.job_dir(job_id))
                except JobExpired:
                    self._finish(job_id, st.EXPIRED, reason=expiry_reason(limit))
                except JobCancelled:
                    self._finish(job_id, st.CANCELLED, reason="cancelled while running")
                except AnomalyServiceError as e:
                    logger.error(f"job failed: {e.code}: {e.message}")
                    self._finish(job_id, st.FAILED, reason=f"{e.code}: {e.message}")
                except Exception as e:
                    logger.exception("job crashed")
                    self._finish(job_id, st.FAILED, reason=f"internal: {type(e).__name__}: {e}")
                else:
                    self._finish(job_id, st.SUCCEEDED, result=st.RESULT_FILE)
                    logger.success("job succeeded")
        finally:
            timer.cancel()
            remove_job_log(handler)
            with self._lock:
                self._active.discard(job_id)
                self._cancel.pop(job_id, None)

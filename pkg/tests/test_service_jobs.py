from __future__ import annotations

import json
import threading
import time

import pytest
import urllib3

from service import store as st
from service.config import ServiceConfig
from service.errors import CapacityExceeded, NoResults, NotFound, NotReady, ValidationFailed
from service.limits import DEFAULT_SIZES, job_seconds
from service.manager import JobManager, expiry_reason
from service.query import query_anomalies
from service.server import build_server
from service.store import JobStore

START_MS = 1_704_067_200_000
STEP_MS = 60_000
SPIKE_MS = START_MS + 120 * STEP_MS


def _body(csv: str, **extra) -> dict:
    return {
        "data_file": csv,
        "time_column": "timestamp",
        "target_columns": ["cpu"],
        "anomaly_estimator": "Covariance",
        "labeling_threshold": 0.001,
        **extra,
    }


def _wait(manager: JobManager, job_id: str, timeout: float = 60.0) -> st.Job:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        job = manager.get(job_id)
        if job.terminal:
            return job
        time.sleep(0.05)
    raise AssertionError(f"job {job_id} still {manager.get(job_id).state} after {timeout}s")


@pytest.fixture
def config(tmp_path) -> ServiceConfig:
    return ServiceConfig(store_dir=tmp_path / "jobs", workers=2)


@pytest.fixture
def manager(config):
    m = JobManager(config)
    m.start()
    yield m
    m.shutdown(wait=True)


def test_burst_admits_exactly_max_jobs(tmp_path, spike_csv) -> None:
    idle = JobManager(ServiceConfig(store_dir=tmp_path / "burst", max_jobs=100))
    admitted = rejected = 0
    for _ in range(150):
        try:
            idle.submit("univariate", _body(spike_csv))
            admitted += 1
        except CapacityExceeded:
            rejected += 1
        assert idle.active_count <= 100
    assert (admitted, rejected) == (100, 50)
    assert all(job.state == st.QUEUED for job in idle.store.list())


def test_invalid_request_is_not_stored(config) -> None:
    idle = JobManager(config)
    with pytest.raises(ValidationFailed):
        idle.submit("univariate", {"time_column": "timestamp"})
    assert idle.store.list() == []


def test_job_finds_the_spike_and_is_queryable(manager, spike_csv) -> None:
    job = manager.submit("univariate", _body(spike_csv))
    assert job.state == st.QUEUED
    done = _wait(manager, job.id)
    assert done.state == st.SUCCEEDED, done.reason
    assert done.started_at and done.finished_at

    lines = manager.result(job.id).decode().splitlines()
    assert lines[0] == "timestamp,raw,p_value,label"
    anomalies = [line for line in lines[1:] if line.endswith(",-1")]
    assert len(anomalies) == 1
    assert anomalies[0].startswith(f"{SPIKE_MS},")

    rows = query_anomalies(manager.store, "cpu", label=-1)
    assert [r.timestamp for r in rows] == [SPIKE_MS]
    window = query_anomalies(manager.store, "cpu", SPIKE_MS - STEP_MS, SPIKE_MS + STEP_MS)
    assert [r.timestamp for r in window] == [SPIKE_MS - STEP_MS, SPIKE_MS, SPIKE_MS + STEP_MS]
    with pytest.raises(NoResults):
        query_anomalies(manager.store, "cpu", 0, 1000)
    with pytest.raises(NoResults):
        query_anomalies(manager.store, "mem")

    again = manager.cancel(job.id)
    assert again.state == st.SUCCEEDED


def test_same_request_twice_gives_identical_results(manager, spike_csv) -> None:
    body = _body(spike_csv, anomaly_estimator="IsolationForest", algorithm_config={"seed": 3})
    first = manager.submit("univariate", body)
    second = manager.submit("univariate", body)
    assert _wait(manager, first.id).state == st.SUCCEEDED
    assert _wait(manager, second.id).state == st.SUCCEEDED
    assert manager.result(first.id) == manager.result(second.id)


def test_stream_job_scores_observation_window_only(manager, spike_csv) -> None:
    recent = "\n".join(spike_csv.splitlines()[:1] + spike_csv.splitlines()[-30:]) + "\n"
    job = manager.submit("univariate", _body(spike_csv, prediction_type="stream", recent_data=recent,
                                             observation_window=7))
    assert _wait(manager, job.id).state == st.SUCCEEDED
    assert len(manager.result(job.id).decode().splitlines()) == 1 + 7


def test_job_over_row_limit_fails(tmp_path, spike_csv) -> None:
    cfg = ServiceConfig.from_dict({"store_dir": str(tmp_path / "jobs"),
                                   "instance_sizes": {"S": {"max_rows": 50}}})
    m = JobManager(cfg)
    m.start()
    try:
        job = m.submit("univariate", _body(spike_csv, instance_size="S"))
        done = _wait(m, job.id)
    finally:
        m.shutdown()
    assert done.state == st.FAILED
    assert done.reason.startswith("limit_exceeded")
    with pytest.raises(NotReady):
        m.result(job.id)


def test_job_expires_at_its_wall_clock_limit(manager, spike_csv) -> None:
    body = _body(spike_csv, anomaly_estimator="DNN_AutoEncoder", evaluation_time=0.5,
                 algorithm_config={"epochs": 10_000_000})
    job = manager.submit("univariate", body)
    done = _wait(manager, job.id, timeout=30)
    assert done.state == st.EXPIRED
    assert done.reason == "wall-clock limit 0.5s"


def test_default_cap_is_two_hours() -> None:
    limit = job_seconds(DEFAULT_SIZES["L"], None)
    assert limit == 7200
    assert expiry_reason(limit) == "wall-clock limit 7200s"
    assert job_seconds(DEFAULT_SIZES["S"], 30) == 30


def test_cancel_queued_job(config, spike_csv) -> None:
    idle = JobManager(config)
    job = idle.submit("univariate", _body(spike_csv))
    assert idle.cancel(job.id).state == st.CANCELLED
    assert idle.cancel(job.id).state == st.CANCELLED
    assert idle.active_count == 0
    with pytest.raises(NotFound):
        idle.get("0123abcd")


def test_restart_marks_running_jobs_interrupted(config) -> None:
    store = JobStore(config.store_dir)
    queued = store.create("univariate", {"target_columns": ["cpu"]}, "M", {})
    running = store.create("univariate", {"target_columns": ["cpu"]}, "M", {})
    finished = store.create("univariate", {"target_columns": ["cpu"]}, "M", {})
    store.transition(running.id, st.RUNNING)
    store.transition(finished.id, st.RUNNING)
    store.transition(finished.id, st.SUCCEEDED, result=st.RESULT_FILE)

    restarted = JobManager(config, store=JobStore(config.store_dir))
    assert restarted.active_count == 2
    assert restarted.recover() == [queued.id]
    assert restarted.get(running.id).state == st.FAILED
    assert restarted.get(running.id).reason == "interrupted"
    assert restarted.get(finished.id).state == st.SUCCEEDED
    assert restarted.get(queued.id).state == st.QUEUED
    assert restarted.active_count == 1


def test_terminal_states_never_change(config) -> None:
    store = JobStore(config.store_dir)
    job = store.create("mixture", {}, "M", {})
    store.transition(job.id, st.CANCELLED)
    for state in st.STATES:
        with pytest.raises(Exception):
            store.transition(job.id, state)
    assert store.load(job.id).state == st.CANCELLED


@pytest.fixture
def http_service(tmp_path):
    m = JobManager(ServiceConfig(store_dir=tmp_path / "jobs", max_jobs=2))
    server = build_server(m, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[:2]
    yield m, f"http://{host}:{port}", urllib3.PoolManager()
    server.shutdown()
    server.server_close()


def _post(http, url: str, body) -> urllib3.BaseHTTPResponse:
    return http.request("POST", url, body=json.dumps(body).encode(),
                        headers={"Content-Type": "application/json"})


def test_http_routes(http_service, spike_csv) -> None:
    manager, base, http = http_service
    first = _post(http, f"{base}/v1/anomaly/univariate", _body(spike_csv))
    assert first.status == 202
    job_id = json.loads(first.data)["id"]
    assert _post(http, f"{base}/v1/anomaly/univariate", _body(spike_csv)).status == 202
    full = _post(http, f"{base}/v1/anomaly/univariate", _body(spike_csv))
    assert full.status == 429
    assert json.loads(full.data)["error"]["code"] == "capacity_exceeded"

    status = http.request("GET", f"{base}/v1/jobs/{job_id}")
    assert status.status == 200
    assert json.loads(status.data)["state"] == "queued"
    assert http.request("GET", f"{base}/v1/jobs/{job_id}/result").status == 409
    cancelled = http.request("DELETE", f"{base}/v1/jobs/{job_id}")
    assert json.loads(cancelled.data)["state"] == "cancelled"
    assert http.request("GET", f"{base}/v1/jobs/0000beef").status == 404

    bad = _post(http, f"{base}/v1/anomaly/bivariate", _body(spike_csv))
    assert bad.status == 400
    invalid = _post(http, f"{base}/v1/anomaly/multivariate", _body(spike_csv, label_column="x"))
    assert invalid.status == 400
    details = json.loads(invalid.data)["error"]["details"]["violations"]
    assert "label_column not accepted by the multivariate endpoint" in details

    health = json.loads(http.request("GET", f"{base}/v1/health").data)
    assert health == {"status": "ok", "active_jobs": 1, "max_jobs": 2}
    assert http.request("GET", f"{base}/v1/anomalies?series=cpu").status == 404
    assert http.request("GET", f"{base}/v1/anomalies").status == 400

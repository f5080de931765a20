from __future__ import annotations

import base64
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from service.config import ServiceConfig
from service.errors import AuthFailed, NetworkError, ObjectNotFound, TooLarge
from service.limits import DEFAULT_SIZES
from service.objstore import ObjectLocator, fetch_object
from service.pipeline import read_input
from service.schema import DataRef

FIXTURE = b"timestamp,cpu\n2024-01-01 00:00:00,1\n2024-01-01 00:01:00,2\n"


class FakeStore:
    """Scripted object store: each request pops the next status code."""

    def __init__(self, statuses: list[int], body: bytes = FIXTURE) -> None:
        self.statuses = list(statuses)
        self.body = body
        self.requests: list[tuple[str, str | None]] = []


@pytest.fixture
def fake_store():
    stores: list[tuple[ThreadingHTTPServer, FakeStore]] = []

    def _start(statuses: list[int], body: bytes = FIXTURE) -> tuple[str, FakeStore]:
        state = FakeStore(statuses, body)

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, format, *args) -> None:
                pass

            def do_GET(self) -> None:
                state.requests.append((self.path, self.headers.get("Authorization")))
                status = state.statuses.pop(0) if state.statuses else 200
                payload = state.body if status == 200 else b"error"
                self.send_response(status)
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        stores.append((server, state))
        host, port = server.server_address[:2]
        return f"http://{host}:{port}", state

    yield _start
    for server, _ in stores:
        server.shutdown()
        server.server_close()


def test_fetch_returns_the_object_bytes(fake_store) -> None:
    url, state = fake_store([200])
    data = fetch_object(ObjectLocator(url, "metrics", "vsi/cpu.csv"), 1024, sleep=lambda _: None)
    assert data == FIXTURE
    assert state.requests[0][0] == "/metrics/vsi/cpu.csv"


def test_transient_errors_are_retried_with_backoff(fake_store) -> None:
    url, state = fake_store([503, 503, 200])
    waits: list[float] = []
    data = fetch_object(ObjectLocator(url, "b", "k"), 1024, sleep=waits.append)
    assert data == FIXTURE
    assert len(state.requests) == 3
    assert waits == [1.0, 2.0]


def test_retries_give_up_after_three_attempts(fake_store) -> None:
    url, state = fake_store([500, 502, 503, 200])
    waits: list[float] = []
    with pytest.raises(NetworkError) as exc:
        fetch_object(ObjectLocator(url, "b", "k"), 1024, sleep=waits.append)
    assert exc.value.details["attempts"] == 3
    assert len(state.requests) == 3
    assert waits == [1.0, 2.0]


def test_forbidden_is_not_retried(fake_store) -> None:
    url, state = fake_store([403, 200])
    with pytest.raises(AuthFailed):
        fetch_object(ObjectLocator(url, "b", "k"), 1024, sleep=lambda _: None)
    assert len(state.requests) == 1


def test_missing_object(fake_store) -> None:
    url, state = fake_store([404])
    with pytest.raises(ObjectNotFound):
        fetch_object(ObjectLocator(url, "b", "k"), 1024, sleep=lambda _: None)
    assert len(state.requests) == 1


def test_object_above_cap_is_refused(fake_store) -> None:
    url, _ = fake_store([200], body=b"x" * 5000)
    with pytest.raises(TooLarge):
        fetch_object(ObjectLocator(url, "b", "k"), 1000, sleep=lambda _: None)


def test_credentials_come_from_the_environment(fake_store) -> None:
    url, state = fake_store([200])
    env = {"ADS_OBJSTORE_ENDPOINT": url, "ADS_OBJSTORE_OPS_KEY_ID": "id", "ADS_OBJSTORE_OPS_SECRET": "s3cret"}
    config = ServiceConfig.from_env(env)
    with pytest.MonkeyPatch.context() as mp:
        for name, value in env.items():
            mp.setenv(name, value)
        data = read_input(DataRef("object", bucket="b", key="k", credentials="ops"), DEFAULT_SIZES["S"], config,
                          sleep=lambda _: None)
    assert data == FIXTURE
    assert state.requests[0][1] == "Basic " + base64.b64encode(b"id:s3cret").decode()


def test_unknown_credentials_reference_fails_before_fetch(fake_store) -> None:
    url, state = fake_store([200])
    config = ServiceConfig.from_env({"ADS_OBJSTORE_ENDPOINT": url})
    with pytest.raises(AuthFailed):
        read_input(DataRef("object", bucket="b", key="k", credentials="missing"), DEFAULT_SIZES["S"], config)
    assert state.requests == []

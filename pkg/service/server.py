"""HTTP surface of the job service.

Routes::

    POST   /v1/anomaly/{endpoint}     submit a job, 202 with the Job record
    GET    /v1/jobs/{id}              Job record
    GET    /v1/jobs/{id}/result       result CSV, 409 until the job succeeded
    DELETE /v1/jobs/{id}              cancel (idempotent)
    GET    /v1/anomalies?series=&from=&to=&label=
    GET    /v1/health
"""

from __future__ import annotations

import json
import re
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any
from urllib.parse import parse_qs, urlsplit

from loguru import logger

from service.config import ServiceConfig
from service.errors import NotFound, ServiceError, ValidationFailed
from service.manager import JobManager
from service.query import query_anomalies
from utils.errors import AnomalyServiceError

MAX_BODY = 1024 * 1024 * 1024

_SUBMIT = re.compile(r"^/v1/anomaly/([A-Za-z_]+)$")
_JOB = re.compile(r"^/v1/jobs/([0-9a-f]+)$")
_RESULT = re.compile(r"^/v1/jobs/([0-9a-f]+)/result$")


def _int_param(params: dict[str, list[str]], name: str) -> int | None:
    values = params.get(name)
    if not values or values[0] == "":
        return None
    try:
        return int(values[0])
    except ValueError:
        raise ValidationFailed([f"{name} must be an integer (epoch milliseconds)"]) from None


class ServiceHandler(BaseHTTPRequestHandler):
    manager: JobManager
    server_version = "adservice/1"

    def log_message(self, format: str, *args: Any) -> None:
        logger.debug(f"{self.address_string()} {format % args}")

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _json(self, status: int, obj: Any) -> None:
        self._send(status, json.dumps(obj, ensure_ascii=False).encode("utf-8"), "application/json")

    def _error(self, exc: AnomalyServiceError) -> None:
        status = getattr(exc, "status", 500) if isinstance(exc, ServiceError) else HTTPStatus.BAD_REQUEST
        self._json(status, {"error": exc.to_dict()})

    def _body(self) -> Any:
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY:
            raise ValidationFailed([f"request body above {MAX_BODY} bytes"])
        raw = self.rfile.read(length) if length else b""
        try:
            return json.loads(raw or b"{}")
        except json.JSONDecodeError as e:
            raise ValidationFailed([f"body is not valid JSON: {e.msg}"]) from None

    def _dispatch(self, method: str) -> None:
        url = urlsplit(self.path)
        path = url.path.rstrip("/") or "/"
        try:
            if method == "POST" and (m := _SUBMIT.match(path)):
                job = self.manager.submit(m.group(1), self._body())
                self._json(HTTPStatus.ACCEPTED, job.to_dict())
            elif method == "GET" and (m := _RESULT.match(path)):
                self._send(HTTPStatus.OK, self.manager.result(m.group(1)), "text/csv")
            elif method == "GET" and (m := _JOB.match(path)):
                self._json(HTTPStatus.OK, self.manager.get(m.group(1)).to_dict())
            elif method == "DELETE" and (m := _JOB.match(path)):
                self._json(HTTPStatus.OK, self.manager.cancel(m.group(1)).to_dict())
            elif method == "GET" and path == "/v1/anomalies":
                params = parse_qs(url.query)
                series = (params.get("series") or [""])[0]
                if not series:
                    raise ValidationFailed(["series is required"])
                rows = query_anomalies(self.manager.store, series, _int_param(params, "from"),
                                       _int_param(params, "to"), _int_param(params, "label"))
                self._json(HTTPStatus.OK, {"series": series, "rows": [r.to_dict() for r in rows]})
            elif method == "GET" and path == "/v1/health":
                self._json(HTTPStatus.OK, {"status": "ok", "active_jobs": self.manager.active_count,
                                           "max_jobs": self.manager.config.max_jobs})
            else:
                raise NotFound(f"no route {method} {path}")
        except AnomalyServiceError as e:
            self._error(e)
        except Exception as e:
            logger.exception(f"unhandled error on {method} {path}")
            self._json(HTTPStatus.INTERNAL_SERVER_ERROR, {"error": {"code": "internal", "message": str(e)}})

    def do_GET(self) -> None:
        self._dispatch("GET")

    def do_POST(self) -> None:
        self._dispatch("POST")

    def do_DELETE(self) -> None:
        self._dispatch("DELETE")


def build_server(manager: JobManager, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Bind a server for *manager*; port 0 picks a free port."""
    handler = type("BoundServiceHandler", (ServiceHandler,), {"manager": manager})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def serve(config: ServiceConfig) -> None:
    manager = JobManager(config)
    manager.start()
    server = build_server(manager, config.host, config.port)
    host, port = server.server_address[:2]
    logger.success(f"serving on http://{host}:{port} (store {config.store_dir}, max {config.max_jobs} jobs)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        logger.info("shutting down")
    finally:
        server.server_close()
        manager.shutdown(wait=False)

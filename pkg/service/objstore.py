"""Read one object from an S3-style object store over HTTP(S).

The URL is ``<endpoint>/<bucket>/<key>``. Credentials come from the
environment through a named reference and are sent as basic auth.
Transient failures (connection errors, 429, 5xx) are retried with
exponential backoff; auth failures and missing objects are not.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable
from urllib.parse import quote

import urllib3
from loguru import logger

from service.errors import AuthFailed, NetworkError, ObjectNotFound, TooLarge

DEFAULT_ATTEMPTS = 3
BACKOFF_BASE = 1.0
CHUNK_SIZE = 64 * 1024
RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})

_http = urllib3.PoolManager(
    timeout=urllib3.Timeout(connect=10.0, read=60.0),
    maxsize=10,
    retries=False,
)


@dataclass(frozen=True)
class ObjectLocator:
    endpoint: str
    bucket: str
    key: str

    @property
    def url(self) -> str:
        return f"{self.endpoint.rstrip('/')}/{quote(self.bucket, safe='')}/{quote(self.key, safe='/')}"


class _Transient(Exception):
    pass


def _read_capped(resp: urllib3.BaseHTTPResponse, max_bytes: int, url: str) -> bytes:
    length = resp.headers.get("Content-Length")
    if length is not None and length.isdigit() and int(length) > max_bytes:
        raise TooLarge(f"{url} is {length} bytes, limit {max_bytes}", size=int(length), limit=max_bytes)
    parts: list[bytes] = []
    total = 0
    for chunk in resp.stream(CHUNK_SIZE):
        total += len(chunk)
        if total > max_bytes:
            raise TooLarge(f"{url} exceeds {max_bytes} bytes", limit=max_bytes)
        parts.append(chunk)
    return b"".join(parts)


def _fetch_once(http: urllib3.PoolManager, locator: ObjectLocator, headers: dict[str, str],
                max_bytes: int) -> bytes:
    url = locator.url
    try:
        resp = http.request("GET", url, headers=headers, preload_content=False, retries=False)
    except urllib3.exceptions.HTTPError as e:
        raise _Transient(f"{type(e).__name__}: {e}") from e
    try:
        if resp.status in (401, 403):
            raise AuthFailed(f"{url} returned {resp.status}", status=resp.status)
        if resp.status == 404:
            raise ObjectNotFound(f"{url} not found", bucket=locator.bucket, key=locator.key)
        if resp.status in RETRYABLE_STATUS:
            raise _Transient(f"status {resp.status}")
        if resp.status not in (200, 206):
            raise NetworkError(f"{url} returned {resp.status}", status=resp.status)
        try:
            return _read_capped(resp, max_bytes, url)
        except urllib3.exceptions.HTTPError as e:
            raise _Transient(f"{type(e).__name__}: {e}") from e
    finally:
        resp.release_conn()


def fetch_object(locator: ObjectLocator, max_bytes: int,
                 credentials: tuple[str, str] | None = None,
                 attempts: int = DEFAULT_ATTEMPTS,
                 backoff_base: float = BACKOFF_BASE,
                 sleep: Callable[[float], None] = time.sleep,
                 http: urllib3.PoolManager | None = None) -> bytes:
    """Return the object's bytes, trying up to *attempts* times.

    Waits ``backoff_base * 2**i`` seconds before retry i+1 (1s, 2s, 4s, ...).

    Raises AuthFailed (401/403, not retried), ObjectNotFound (404), TooLarge
    (size above *max_bytes*) or NetworkError once every attempt has failed.
    """
    http = http or _http
    headers = urllib3.make_headers(basic_auth=f"{credentials[0]}:{credentials[1]}") if credentials else {}
    attempts = max(1, attempts)
    last = ""
    for attempt in range(attempts):
        if attempt:
            delay = backoff_base * 2 ** (attempt - 1)
            logger.warning(f"fetch {locator.url} failed ({last}), retrying ({attempt + 1}/{attempts}) in {delay:g}s")
            sleep(delay)
        try:
            data = _fetch_once(http, locator, headers, max_bytes)
        except _Transient as e:
            last = str(e)
            continue
        logger.debug(f"fetched {len(data)} bytes from {locator.url} on attempt {attempt + 1}")
        return data
    raise NetworkError(f"{locator.url}: {last} after {attempts} attempts", attempts=attempts)

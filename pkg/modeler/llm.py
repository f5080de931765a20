"""Text-generation clients for the prompt chain.

Every client answers ``complete(stage, subject, prompt)``. The HTTP client
talks to any chat-completion style endpoint; the replay client serves
recorded responses keyed ``"<stage>:<subject>"`` so the chain runs offline.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Mapping, Protocol

import urllib3
from loguru import logger

from modeler.errors import ClientUnavailable

SYSTEM_PROMPT = ("You are a site reliability engineer documenting how cloud infrastructure fails. "
                 "Answer only with the requested bullet list.")


class TextGenClient(Protocol):
    def complete(self, stage: str, subject: str, prompt: str) -> str: ...


def replay_key(stage: str, subject: str) -> str:
    return f"{stage}:{subject}"


class ReplayClient:
    """Serves recorded responses; a missing recording raises ClientUnavailable."""

    def __init__(self, responses: Mapping[str, str]) -> None:
        self.responses = dict(responses)
        self.calls: list[str] = []

    def complete(self, stage: str, subject: str, prompt: str) -> str:
        key = replay_key(stage, subject)
        self.calls.append(key)
        if key not in self.responses:
            raise ClientUnavailable(f"no recorded response for {key!r}")
        return self.responses[key]

    @classmethod
    def from_file(cls, path: Path) -> ReplayClient:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ClientUnavailable(f"cannot read replay fixture {path}: {e}") from None
        responses = data.get("responses", data) if isinstance(data, dict) else None
        if not isinstance(responses, dict):
            raise ClientUnavailable(f"replay fixture {path} must map stage:subject keys to text")
        return cls(responses)


class HttpChatClient:
    """POSTs ``{"model", "messages", "temperature": 0}`` and reads ``choices[0].message.content``.

    Safe to share between threads; the urllib3 pool is thread-safe.
    """

    def __init__(self, endpoint: str, api_key: str | None = None, model: str = "default",
                 timeout: float = 120.0, http: urllib3.PoolManager | None = None) -> None:
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self._http = http or urllib3.PoolManager(
            timeout=urllib3.Timeout(connect=10.0, read=timeout),
            maxsize=10,
            retries=urllib3.Retry(
                total=3,
                backoff_factor=0.5,
                status_forcelist=[429, 500, 502, 503, 504],
                allowed_methods=None,
            ),
        )

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None) -> HttpChatClient:
        env = os.environ if env is None else env
        endpoint = env.get("ADS_LLM_ENDPOINT")
        if not endpoint:
            raise ClientUnavailable("ADS_LLM_ENDPOINT is not set")
        return cls(endpoint, env.get("ADS_LLM_API_KEY"), env.get("ADS_LLM_MODEL") or "default")

    def complete(self, stage: str, subject: str, prompt: str) -> str:
        body: dict[str, Any] = {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": prompt},
            ],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        logger.debug(f"{stage} request for {subject!r} to {self.endpoint}")
        try:
            resp = self._http.request("POST", self.endpoint, body=json.dumps(body).encode("utf-8"),
                                      headers=headers)
        except urllib3.exceptions.HTTPError as e:
            raise ClientUnavailable(f"{self.endpoint}: {e}") from e
        if resp.status != 200:
            raise ClientUnavailable(f"{self.endpoint} returned {resp.status}", status=resp.status)
        try:
            return str(json.loads(resp.data)["choices"][0]["message"]["content"])
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise ClientUnavailable(f"unexpected response shape from {self.endpoint}: {e}") from e

"""Service configuration from ADS_* environment variables and an optional JSON file."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from service.errors import ValidationFailed
from service.limits import DEFAULT_SIZES, MAX_JOB_SECONDS, InstanceSize, sizes_from_dict

DEFAULT_STORE_DIR = Path.home() / ".adservice" / "jobs"
DEFAULT_PORT = 8080
DEFAULT_MAX_JOBS = 100
FETCH_ATTEMPTS = 3
FETCH_BACKOFF_BASE = 1.0

_TRUE = {"1", "true", "yes", "on"}


def _default_workers(max_jobs: int) -> int:
    return max(1, min(os.cpu_count() or 1, max_jobs))


@dataclass
class ServiceConfig:
    store_dir: Path = DEFAULT_STORE_DIR
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    max_jobs: int = DEFAULT_MAX_JOBS
    workers: int = 0
    objstore_endpoint: str | None = None
    objstore_key_id: str | None = None
    objstore_secret: str | None = None
    allow_local_paths: bool = False
    max_job_seconds: float = MAX_JOB_SECONDS
    fetch_attempts: int = FETCH_ATTEMPTS
    fetch_backoff_base: float = FETCH_BACKOFF_BASE
    instance_sizes: dict[str, InstanceSize] = field(default_factory=lambda: dict(DEFAULT_SIZES))

    def __post_init__(self) -> None:
        self.store_dir = Path(self.store_dir).expanduser()
        self.max_jobs = int(self.max_jobs)
        errors = []
        if self.max_jobs < 1:
            errors.append(f"max_jobs must be >= 1, got {self.max_jobs}")
        if not 0 < int(self.port) < 65536:
            errors.append(f"port out of range: {self.port}")
        if self.max_job_seconds <= 0:
            errors.append("max_job_seconds must be > 0")
        if errors:
            raise ValidationFailed(errors)
        self.port = int(self.port)
        # the pool never exceeds the admission cap
        self.workers = min(int(self.workers), self.max_jobs) if self.workers else _default_workers(self.max_jobs)

    def size(self, label: str) -> InstanceSize:
        return self.instance_sizes[label]

    def credentials(self, name: str | None = None) -> tuple[str, str] | None:
        """Resolve a named credential reference to (key id, secret) from the environment.

        ``None`` or ``"default"`` uses ADS_OBJSTORE_KEY_ID / ADS_OBJSTORE_SECRET;
        any other name ``x`` uses ADS_OBJSTORE_X_KEY_ID / ADS_OBJSTORE_X_SECRET.
        """
        if name in (None, "", "default"):
            key_id, secret = self.objstore_key_id, self.objstore_secret
        else:
            prefix = f"ADS_OBJSTORE_{name.upper()}_"
            key_id, secret = os.environ.get(prefix + "KEY_ID"), os.environ.get(prefix + "SECRET")
        if key_id and secret:
            return key_id, secret
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "store_dir": str(self.store_dir),
            "host": self.host,
            "port": self.port,
            "max_jobs": self.max_jobs,
            "workers": self.workers,
            "objstore_endpoint": self.objstore_endpoint,
            "allow_local_paths": self.allow_local_paths,
            "max_job_seconds": self.max_job_seconds,
            "instance_sizes": {k: v.to_dict() for k, v in self.instance_sizes.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], base: ServiceConfig | None = None) -> ServiceConfig:
        """Override *base* (or the defaults) with the keys present in *d*."""
        base = base or cls()
        known = {"store_dir", "host", "port", "max_jobs", "workers", "objstore_endpoint",
                 "objstore_key_id", "objstore_secret", "allow_local_paths", "max_job_seconds",
                 "fetch_attempts", "fetch_backoff_base", "instance_sizes"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationFailed([f"unknown config fields: {', '.join(unknown)}"])
        updates = {k: v for k, v in d.items() if k != "instance_sizes"}
        if "instance_sizes" in d:
            updates["instance_sizes"] = sizes_from_dict(d["instance_sizes"])
        if "workers" not in d and "max_jobs" in d:
            updates["workers"] = 0
        return replace(base, **updates)

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None) -> ServiceConfig:
        env = os.environ if env is None else env
        errors = []

        def _int(name: str, default: int) -> int:
            raw = env.get(name)
            if raw in (None, ""):
                return default
            try:
                return int(raw)
            except ValueError:
                errors.append(f"{name} must be an integer, got {raw!r}")
                return default

        values = dict(
            store_dir=Path(env.get("ADS_STORE_DIR") or DEFAULT_STORE_DIR),
            port=_int("ADS_PORT", DEFAULT_PORT),
            max_jobs=_int("ADS_MAX_JOBS", DEFAULT_MAX_JOBS),
            workers=_int("ADS_WORKERS", 0),
            objstore_endpoint=env.get("ADS_OBJSTORE_ENDPOINT") or None,
            objstore_key_id=env.get("ADS_OBJSTORE_KEY_ID") or None,
            objstore_secret=env.get("ADS_OBJSTORE_SECRET") or None,
            allow_local_paths=str(env.get("ADS_ALLOW_LOCAL_PATHS", "0")).lower() in _TRUE,
        )
        if errors:
            raise ValidationFailed(errors)
        return cls(**values)


def load_config(path: Path | None = None, env: Mapping[str, str] | None = None) -> ServiceConfig:
    """Environment first, then the JSON file at *path* on top."""
    config = ServiceConfig.from_env(env)
    if path is None:
        return config
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationFailed([f"cannot read config {path}: {e}"]) from e
    if not isinstance(data, dict):
        raise ValidationFailed([f"config {path} must hold a JSON object"])
    return ServiceConfig.from_dict(data, base=config)

"""Instance sizes and the checks that keep a job inside them."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Mapping

from service.errors import LimitExceeded
from tsdata.frame import MetricFrame

MAX_JOB_SECONDS = 7200.0
SIZE_LABELS = ("S", "M", "L")
_MB = 1024 * 1024


@dataclass(frozen=True)
class InstanceSize:
    label: str
    max_seconds: float
    max_rows: int
    max_columns: int
    max_bytes: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "max_seconds": self.max_seconds,
            "max_rows": self.max_rows,
            "max_columns": self.max_columns,
            "max_bytes": self.max_bytes,
        }


DEFAULT_SIZES: dict[str, InstanceSize] = {
    "S": InstanceSize("S", 600.0, 50_000, 50, 64 * _MB),
    "M": InstanceSize("M", 3600.0, 500_000, 200, 512 * _MB),
    "L": InstanceSize("L", 7200.0, 5_000_000, 500, 4096 * _MB),
}


def sizes_from_dict(d: Mapping[str, Mapping[str, Any]]) -> dict[str, InstanceSize]:
    """Overlay per-size overrides (e.g. ``{"S": {"max_rows": 100}}``) on the defaults."""
    out = dict(DEFAULT_SIZES)
    for label, fields in d.items():
        if label not in out:
            raise LimitExceeded(f"unknown instance size {label!r}")
        out[label] = replace(out[label], **dict(fields))
    return out


def check_bytes(size: InstanceSize, n_bytes: int) -> None:
    if n_bytes > size.max_bytes:
        raise LimitExceeded(f"input is {n_bytes} bytes, instance {size.label} allows {size.max_bytes}",
                            limit="max_bytes")


def check_frame(size: InstanceSize, frame: MetricFrame) -> None:
    if len(frame) > size.max_rows:
        raise LimitExceeded(f"input has {len(frame)} rows, instance {size.label} allows {size.max_rows}",
                            limit="max_rows")
    if frame.width > size.max_columns:
        raise LimitExceeded(f"input has {frame.width} columns, instance {size.label} allows {size.max_columns}",
                            limit="max_columns")


def job_seconds(size: InstanceSize, evaluation_time: float | None, cap: float = MAX_JOB_SECONDS) -> float:
    """Wall-clock budget: the smallest of the request, the instance and the service cap."""
    limit = min(size.max_seconds, cap)
    if evaluation_time is not None:
        limit = min(limit, float(evaluation_time))
    return limit

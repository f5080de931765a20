"""Fitted-model container, raw score series and JSON persistence.

Arrays are stored as base64 of their raw little-endian bytes next to dtype and
shape, so a saved model scores bit-identically after loading.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from detectors.errors import ModelFormatError, SchemaMismatch
from tsdata.frame import NormStats

MODEL_FORMAT = "adservice-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainStats:
    """Mean/std (population) of the finite training-time raw scores."""

    mean: float
    std: float
    count: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"mean": self.mean, "std": self.std, "count": self.count}

    @classmethod
    def from_scores(cls, scores: np.ndarray) -> TrainStats:
        finite = np.asarray(scores, dtype=np.float64)
        finite = finite[np.isfinite(finite)]
        if finite.size == 0:
            return cls(mean=0.0, std=0.0, count=0)
        return cls(mean=float(np.mean(finite)), std=float(np.std(finite)), count=int(finite.size))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TrainStats:
        return cls(mean=float(d["mean"]), std=float(d["std"]), count=int(d.get("count", 0)))


@dataclass(frozen=True, eq=False)
class RawScoreSeries:
    """Per-row raw scores; NaN marks an unscored (warm-up) row."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def scored(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def tail(self, count: int) -> RawScoreSeries:
        return RawScoreSeries(self.values[max(0, len(self) - count):])


@dataclass(frozen=True, eq=False)
class FittedModel:
    kind: str
    parameters: Mapping[str, Any]
    train_stats: TrainStats
    schema: tuple[str, ...]
    lookback: int = 0
    config: Mapping[str, Any] = field(default_factory=dict)
    norm: NormStats | None = None

    def check_schema(self, names: Sequence[str]) -> None:
        if list(names) != list(self.schema):
            raise SchemaMismatch(self.schema, names)

    def with_norm(self, norm: NormStats | None) -> FittedModel:
        return FittedModel(self.kind, self.parameters, self.train_stats, self.schema,
                           self.lookback, self.config, norm)


def _encode(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        arr = np.ascontiguousarray(value)
        if arr.dtype == object:
            return {"__list__": [_encode(v) for v in arr.tolist()]}
        return {
            "__ndarray__": base64.b64encode(arr.astype(arr.dtype.newbyteorder("<")).tobytes()).decode("ascii"),
            "dtype": arr.dtype.newbyteorder("<").str,
            "shape": list(arr.shape),
        }
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Mapping):
        return {str(k): _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    return value


def _decode(value: Any) -> Any:
    if isinstance(value, dict):
        if "__ndarray__" in value:
            raw = base64.b64decode(value["__ndarray__"])
            return np.frombuffer(raw, dtype=np.dtype(value["dtype"])).reshape(value["shape"]).astype(
                np.dtype(value["dtype"]).newbyteorder("="))
        if "__list__" in value:
            return np.array([_decode(v) for v in value["__list__"]], dtype=object)
        return {k: _decode(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode(v) for v in value]
    return value


def model_to_dict(model: FittedModel) -> dict[str, Any]:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "schema": list(model.schema),
        "lookback": model.lookback,
        "config": _encode(dict(model.config)),
        "train_stats": model.train_stats.to_dict(),
        "norm": None if model.norm is None else model.norm.to_dict(),
        "parameters": _encode(dict(model.parameters)),
    }


def model_from_dict(d: Mapping[str, Any]) -> FittedModel:
    if d.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"not a model document: format={d.get('format')!r}")
    if d.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {d.get('version')!r}")
    try:
        return FittedModel(
            kind=d["kind"],
            parameters=_decode(d["parameters"]),
            train_stats=TrainStats.from_dict(d["train_stats"]),
            schema=tuple(d["schema"]),
            lookback=int(d.get("lookback", 0)),
            config=_decode(d.get("config") or {}),
            norm=None if d.get("norm") is None else NormStats.from_dict(d["norm"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"malformed model document: {e}") from None


def save_model(model: FittedModel, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(model_to_dict(model), indent=1, sort_keys=True), encoding="utf-8")
    os.replace(tmp, path)


def load_model(path: Path) -> FittedModel:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"cannot read model {path}: {e}") from None
    return model_from_dict(doc)

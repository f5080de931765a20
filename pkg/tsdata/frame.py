"""Core time-series containers: MetricFrame, ColumnRoles, WindowSpec."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from tsdata.errors import InvalidFrame, MissingColumn

LABEL_NORMAL = 1
LABEL_ANOMALY = -1
SPLIT_VALUES = ("train", "val", "test")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MetricFrame:
    """A multivariate time series.

    ``timestamps`` are epoch milliseconds (int64, strictly increasing);
    ``columns`` maps names to float64 series in a fixed order. Optional
    ``labels`` (+1/-1) and ``splits`` ("train"/"val"/"test") ride along under
    their original column names. All arrays are read-only.
    """

    timestamps: np.ndarray
    columns: Mapping[str, np.ndarray]
    label_column: str | None = None
    labels: np.ndarray | None = None
    split_column: str | None = None
    splits: np.ndarray | None = None

    def __post_init__(self) -> None:
        ts = _frozen(np.asarray(self.timestamps, dtype=np.int64))
        n = ts.shape[0]
        if ts.ndim != 1:
            raise InvalidFrame("timestamps must be one-dimensional")
        if n > 1 and not np.all(np.diff(ts) > 0):
            raise InvalidFrame("timestamps must strictly increase")
        cols: dict[str, np.ndarray] = {}
        for name, values in self.columns.items():
            arr = np.asarray(values, dtype=np.float64)
            if arr.shape != (n,):
                raise InvalidFrame(f"column {name} has length {arr.shape} but there are {n} timestamps")
            cols[name] = _frozen(arr)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "columns", cols)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int8)
            if labels.shape != (n,):
                raise InvalidFrame("labels length differs from timestamps")
            if not np.all(np.isin(labels, (LABEL_NORMAL, LABEL_ANOMALY))):
                raise InvalidFrame("labels must be +1 or -1")
            object.__setattr__(self, "labels", _frozen(labels))
            if self.label_column is None:
                object.__setattr__(self, "label_column", "label")
        if self.splits is not None:
            splits = np.asarray(self.splits, dtype=object)
            if splits.shape != (n,):
                raise InvalidFrame("splits length differs from timestamps")
            object.__setattr__(self, "splits", _frozen(splits))
            if self.split_column is None:
                object.__setattr__(self, "split_column", "split")

    def __len__(self) -> int:
        return int(self.timestamps.shape[0])

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def width(self) -> int:
        return len(self.columns)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise MissingColumn(name) from None

    def values(self, names: Sequence[str] | None = None) -> np.ndarray:
        """Return an (n, d) float64 matrix of the selected columns."""
        names = self.names if names is None else list(names)
        if not names:
            return np.empty((len(self), 0), dtype=np.float64)
        return np.column_stack([self.column(n) for n in names])

    def select(self, names: Iterable[str]) -> MetricFrame:
        names = list(names)
        return MetricFrame(
            timestamps=self.timestamps,
            columns={n: self.column(n) for n in names},
            label_column=self.label_column,
            labels=self.labels,
            split_column=self.split_column,
            splits=self.splits,
        )

    def take(self, rows: np.ndarray | slice | Sequence[int]) -> MetricFrame:
        """Row subset (positions or boolean mask), keeping order."""
        idx = np.arange(len(self))[rows]
        return MetricFrame(
            timestamps=self.timestamps[idx],
            columns={n: v[idx] for n, v in self.columns.items()},
            label_column=self.label_column,
            labels=None if self.labels is None else self.labels[idx],
            split_column=self.split_column,
            splits=None if self.splits is None else self.splits[idx],
        )

    def tail(self, count: int) -> MetricFrame:
        return self.take(slice(max(0, len(self) - count), None))

    def with_columns(self, columns: Mapping[str, np.ndarray]) -> MetricFrame:
        return MetricFrame(
            timestamps=self.timestamps,
            columns=columns,
            label_column=self.label_column,
            labels=self.labels,
            split_column=self.split_column,
            splits=self.splits,
        )

    def equals(self, other: MetricFrame) -> bool:
        if self.names != other.names or len(self) != len(other):
            return False
        if not np.array_equal(self.timestamps, other.timestamps):
            return False
        if any(not np.array_equal(self.columns[n], other.columns[n]) for n in self.names):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        if self.labels is not None and not np.array_equal(self.labels, other.labels):
            return False
        if (self.splits is None) != (other.splits is None):
            return False
        if self.splits is not None and list(self.splits) != list(other.splits):
            return False
        return self.label_column == other.label_column and self.split_column == other.split_column


@dataclass(frozen=True)
class ColumnRoles:
    """How the columns of an input file are used."""

    time_column: str
    target_columns: tuple[str, ...]
    time_format: str = "%Y-%m-%d %H:%M:%S"
    feature_columns: tuple[str, ...] = ()
    label_column: str | None = None
    split_column: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "target_columns", tuple(self.target_columns))
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns or ()))
        if not self.time_column:
            raise InvalidFrame("time_column is required")
        if not self.target_columns:
            raise InvalidFrame("target_columns must not be empty")
        overlap = set(self.target_columns) & set(self.feature_columns)
        if overlap:
            raise InvalidFrame(f"feature_columns and target_columns overlap: {sorted(overlap)}")

    @property
    def numeric_columns(self) -> list[str]:
        """Targets first, then features, without duplicates."""
        seen: dict[str, None] = {}
        for name in (*self.target_columns, *self.feature_columns):
            seen.setdefault(name, None)
        return list(seen)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ColumnRoles:
        return cls(
            time_column=d["time_column"],
            target_columns=tuple(d["target_columns"]),
            time_format=d.get("time_format") or "%Y-%m-%d %H:%M:%S",
            feature_columns=tuple(d.get("feature_columns") or ()),
            label_column=d.get("label_column"),
            split_column=d.get("split_column") or d.get("train_val_test_column"),
        )


@dataclass(frozen=True)
class WindowSpec:
    lookback_window: int = 10
    observation_window: int = 10

    def __post_init__(self) -> None:
        for name in ("lookback_window", "observation_window"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidFrame(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class NormStats:
    """Per-column z-score statistics captured on the fit rows."""

    mean: Mapping[str, float] = field(default_factory=dict)
    std: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, dict[str, float]]:
        return {"mean": dict(self.mean), "std": dict(self.std)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Mapping[str, float]]) -> NormStats:
        return cls(mean={k: float(v) for k, v in d["mean"].items()},
                   std={k: float(v) for k, v in d["std"].items()})

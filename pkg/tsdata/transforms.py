"""Normalization, windowing, feature selection and split handling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from loguru import logger

from tsdata.errors import EmptyFitRange, MissingColumn, SeriesTooShort, UnknownSplitValue
from tsdata.frame import SPLIT_VALUES, MetricFrame, NormStats, WindowSpec

EPS = 1e-12
CORR_THRESHOLD = 0.99

RowRange = slice | np.ndarray | Sequence[int] | None


def _fit_index(n: int, fit_rows: RowRange) -> np.ndarray:
    if fit_rows is None:
        return np.arange(n)
    return np.arange(n)[fit_rows]


def zscore_normalize(frame: MetricFrame, fit_rows: RowRange = None) -> tuple[MetricFrame, NormStats]:
    """Z-score every column using mean/std computed on *fit_rows* only.

    ``fit_rows`` is a slice, an index array or a boolean mask; ``None`` means
    every row. The population standard deviation is floored at ``EPS``.
    """
    idx = _fit_index(len(frame), fit_rows)
    if idx.size == 0:
        raise EmptyFitRange("fit rows are empty")
    mean: dict[str, float] = {}
    std: dict[str, float] = {}
    for name, values in frame.columns.items():
        fit = values[idx]
        mean[name] = float(np.mean(fit))
        std[name] = float(np.std(fit))
    stats = NormStats(mean=mean, std=std)
    return apply_norm(frame, stats), stats


def apply_norm(frame: MetricFrame, stats: NormStats) -> MetricFrame:
    """Apply previously captured statistics (stream data, test splits)."""
    out = {}
    for name, values in frame.columns.items():
        if name not in stats.mean:
            raise MissingColumn(name)
        out[name] = (values - stats.mean[name]) / max(stats.std[name], EPS)
    return frame.with_columns(out)


def inverse_normalize(frame: MetricFrame, stats: NormStats) -> MetricFrame:
    out = {}
    for name, values in frame.columns.items():
        if name not in stats.mean:
            raise MissingColumn(name)
        out[name] = values * max(stats.std[name], EPS) + stats.mean[name]
    return frame.with_columns(out)


@dataclass(frozen=True)
class Windows:
    """Lookback windows over a frame.

    ``inputs[i]`` holds rows ``[i, i + lookback)`` and ``targets[i]`` is row
    ``i + lookback``; ``target_rows`` gives those row positions.
    """

    inputs: np.ndarray
    targets: np.ndarray
    target_rows: np.ndarray

    def __len__(self) -> int:
        return int(self.target_rows.shape[0])

    def __iter__(self) -> Iterator[tuple[np.ndarray, int]]:
        for i in range(len(self)):
            yield self.inputs[i], int(self.target_rows[i])

    def flat(self) -> np.ndarray:
        """Inputs flattened to (m, lookback * d), oldest row first."""
        m = len(self)
        return self.inputs.reshape(m, -1)


def window_values(values: np.ndarray, lookback: int) -> Windows:
    n = values.shape[0]
    if n <= lookback:
        raise SeriesTooShort(n, lookback)
    m = n - lookback
    view = np.lib.stride_tricks.sliding_window_view(values, lookback, axis=0)
    # sliding_window_view puts the window axis last: (n - L + 1, d, L)
    inputs = np.ascontiguousarray(np.swapaxes(view[:m], 1, 2))
    return Windows(inputs=inputs, targets=values[lookback:].copy(),
                   target_rows=np.arange(lookback, n))


def make_windows(frame: MetricFrame, spec: WindowSpec, names: Sequence[str] | None = None) -> Windows:
    return window_values(frame.values(names), spec.lookback_window)


@dataclass(frozen=True)
class FeatureSelection:
    retained: list[str]
    dropped: dict[str, str] = field(default_factory=dict)

    @property
    def all_dropped(self) -> bool:
        return not self.retained


def unsupervised_feature_select(frame: MetricFrame, columns: Sequence[str] | None = None) -> FeatureSelection:
    """Drop constant columns, then the later column of any pair with |r| > 0.99.

    Columns are visited in input order and each is compared only against the
    columns already retained, so the result is deterministic and idempotent.
    """
    columns = frame.names if columns is None else list(columns)
    retained: list[str] = []
    dropped: dict[str, str] = {}
    for name in columns:
        values = frame.column(name)
        if float(np.std(values)) <= EPS:
            dropped[name] = "constant"
            continue
        reason = None
        for kept in retained:
            r = np.corrcoef(frame.column(kept), values)[0, 1]
            if abs(r) > CORR_THRESHOLD:
                reason = f"correlated with {kept} (r={r:.4f})"
                break
        if reason:
            dropped[name] = reason
            continue
        retained.append(name)
    for name, reason in dropped.items():
        logger.debug(f"feature selection dropped {name}: {reason}")
    if not retained:
        logger.warning("feature selection dropped every column")
    return FeatureSelection(retained=retained, dropped=dropped)


def split_by_column(frame: MetricFrame) -> tuple[MetricFrame, MetricFrame, MetricFrame]:
    """Partition rows into (train, val, test) by the split column, keeping order."""
    if frame.splits is None:
        raise MissingColumn(frame.split_column or "split")
    tags = np.array([str(v).strip().lower() for v in frame.splits], dtype=object)
    for i, tag in enumerate(tags):
        if tag not in SPLIT_VALUES:
            raise UnknownSplitValue(i, str(frame.splits[i]))
    return tuple(frame.take(tags == tag) for tag in SPLIT_VALUES)  # type: ignore[return-value]

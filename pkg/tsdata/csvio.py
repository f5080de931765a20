"""CSV ingestion and emission for MetricFrame.

Input is RFC-4180-style UTF-8 text with a header row. Every cell is read as
text first so that row-level errors can name the offending row (0-based data
row index, header excluded) and column.
"""

from __future__ import annotations

import io
from typing import IO, Sequence

import numpy as np
import pandas as pd

from tsdata.errors import (
    DuplicateColumn,
    DuplicateTimestamp,
    InvalidFrame,
    InvalidLabel,
    MissingColumn,
    NonNumericValue,
    TimeParseError,
)
from tsdata.frame import ColumnRoles, MetricFrame

EPOCH_MS = "epoch_ms"
EPOCH_S = "epoch_s"
_EPOCH = pd.Timestamp("1970-01-01", tz="UTC")
_LABEL_VALUES = {"1": 1, "+1": 1, "-1": -1}

RawInput = bytes | bytearray | str | IO[bytes] | IO[str]


def read_table(raw: RawInput) -> pd.DataFrame:
    """Read delimited text into an all-string DataFrame with a checked header."""
    if isinstance(raw, (bytes, bytearray)):
        buf: IO = io.BytesIO(bytes(raw))
    elif isinstance(raw, str):
        buf = io.StringIO(raw)
    else:
        buf = raw
    try:
        table = pd.read_csv(buf, dtype=str, header=None, keep_default_na=False,
                            encoding="utf-8", skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise InvalidFrame("input has no header row") from None
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise InvalidFrame(f"malformed CSV: {e}") from None

    header = [str(h).strip() for h in table.iloc[0].tolist()]
    seen: set[str] = set()
    for name in header:
        if name in seen:
            raise DuplicateColumn(name)
        seen.add(name)
    body = table.iloc[1:].reset_index(drop=True).fillna("")
    body.columns = header
    return body


def parse_times(cells: pd.Series, fmt: str) -> np.ndarray:
    """Parse a text column into epoch milliseconds (int64)."""
    text = cells.astype(str).str.strip()
    if fmt in (EPOCH_MS, EPOCH_S):
        nums = pd.to_numeric(text, errors="coerce")
        bad = nums.isna().to_numpy() | ~np.isfinite(nums.to_numpy(dtype=np.float64))
        if bad.any():
            row = int(np.argmax(bad))
            raise TimeParseError(row, text.iloc[row], fmt)
        scale = 1000.0 if fmt == EPOCH_S else 1.0
        return np.round(nums.to_numpy(dtype=np.float64) * scale).astype(np.int64)

    parsed = pd.to_datetime(text, format=fmt, errors="coerce", utc=True)
    bad = parsed.isna().to_numpy()
    if bad.any():
        row = int(np.argmax(bad))
        raise TimeParseError(row, text.iloc[row], fmt)
    return ((parsed - _EPOCH) // pd.Timedelta(milliseconds=1)).to_numpy(dtype=np.int64)


def format_times(timestamps: np.ndarray, fmt: str) -> list[str]:
    if fmt == EPOCH_MS:
        return [str(int(t)) for t in timestamps]
    if fmt == EPOCH_S:
        return [repr(int(t) / 1000.0) for t in timestamps]
    stamps = pd.to_datetime(np.asarray(timestamps, dtype=np.int64), unit="ms", utc=True)
    return list(stamps.strftime(fmt))


def parse_numbers(cells: pd.Series, column: str) -> np.ndarray:
    text = cells.astype(str).str.strip()
    nums = pd.to_numeric(text, errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(nums)
    if bad.any():
        row = int(np.argmax(bad))
        raise NonNumericValue(row, column, text.iloc[row])
    return nums


def parse_labels(cells: pd.Series) -> np.ndarray:
    text = cells.astype(str).str.strip()
    out = np.empty(len(text), dtype=np.int8)
    for i, value in enumerate(text):
        try:
            out[i] = _LABEL_VALUES[value]
        except KeyError:
            raise InvalidLabel(i, value) from None
    return out


def _sort_rows(ms: np.ndarray) -> np.ndarray:
    order = np.argsort(ms, kind="stable")
    dup = np.flatnonzero(np.diff(ms[order]) == 0)
    if dup.size:
        raise DuplicateTimestamp(int(order[dup[0] + 1]))
    return order


def parse_csv(raw: RawInput, roles: ColumnRoles) -> MetricFrame:
    """Parse delimited text into a MetricFrame sorted by timestamp.

    Numeric columns are the target columns followed by the feature columns.
    Empty or non-finite numeric cells are rejected rather than imputed.
    """
    body = read_table(raw)
    required = [roles.time_column, *roles.numeric_columns]
    if roles.label_column:
        required.append(roles.label_column)
    if roles.split_column:
        required.append(roles.split_column)
    for name in required:
        if name not in body.columns:
            raise MissingColumn(name)

    ms = parse_times(body[roles.time_column], roles.time_format)
    columns = {name: parse_numbers(body[name], name) for name in roles.numeric_columns}
    labels = parse_labels(body[roles.label_column]) if roles.label_column else None
    splits = (body[roles.split_column].astype(str).str.strip().to_numpy(dtype=object)
              if roles.split_column else None)

    order = _sort_rows(ms)
    return MetricFrame(
        timestamps=ms[order],
        columns={name: values[order] for name, values in columns.items()},
        label_column=roles.label_column,
        labels=None if labels is None else labels[order],
        split_column=roles.split_column,
        splits=None if splits is None else splits[order],
    )


def parse_numeric_csv(raw: RawInput, time_column: str | None = None,
                      time_format: str = EPOCH_MS) -> MetricFrame:
    """Parse a file whose every column (except an optional time column) is numeric.

    Without a time column the row position becomes the timestamp, which is how
    benchmark asset files without explicit timing are read.
    """
    body = read_table(raw)
    if time_column is not None and time_column in body.columns:
        ms = parse_times(body[time_column], time_format)
        names = [c for c in body.columns if c != time_column]
    else:
        ms = np.arange(len(body), dtype=np.int64)
        names = list(body.columns)
    columns = {name: parse_numbers(body[name], name) for name in names}
    order = _sort_rows(ms)
    return MetricFrame(timestamps=ms[order], columns={n: v[order] for n, v in columns.items()})


def serialize_csv(frame: MetricFrame, time_column: str = "timestamp",
                  time_format: str = EPOCH_MS, columns: Sequence[str] | None = None) -> bytes:
    """Emit a frame as CSV that :func:`parse_csv` reads back identically."""
    data: dict[str, list[str]] = {time_column: format_times(frame.timestamps, time_format)}
    for name in (frame.names if columns is None else columns):
        data[name] = [repr(float(v)) for v in frame.column(name)]
    if frame.labels is not None:
        data[frame.label_column or "label"] = [str(int(v)) for v in frame.labels]
    if frame.splits is not None:
        data[frame.split_column or "split"] = [str(v) for v in frame.splits]
    return pd.DataFrame(data).to_csv(index=False, lineterminator="\n").encode("utf-8")

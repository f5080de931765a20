"""ScoreSeries: the per-row detection result and its CSV/JSON forms."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import pandas as pd

from scoring.labeling import LABEL_ANOMALY, LABEL_UNSCORED
from tsdata.errors import InvalidFrame

RESULT_COLUMNS = ("timestamp", "raw", "p_value", "label")
UNSCORED = "unscored"


def _fmt_float(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def _fmt_label(v: int) -> str:
    return UNSCORED if v == LABEL_UNSCORED else str(int(v))


@dataclass(frozen=True, eq=False)
class ScoreSeries:
    """Aligned per-row results.

    ``raw``/``p_value`` are NaN and ``label`` is 0 on unscored rows.
    ``attribution`` maps row positions to ranked (column, weight) lists and
    ``extras`` carries endpoint-specific columns such as the mixture mode.
    """

    timestamps: np.ndarray
    raw: np.ndarray
    p_value: np.ndarray
    label: np.ndarray
    attribution: Mapping[int, list[tuple[str, float]]] = field(default_factory=dict)
    extras: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = np.asarray(self.timestamps).shape[0]
        for name in ("raw", "p_value", "label"):
            if np.asarray(getattr(self, name)).shape != (n,):
                raise InvalidFrame(f"{name} length differs from timestamps")
        for name, values in self.extras.items():
            if np.asarray(values).shape != (n,):
                raise InvalidFrame(f"extra column {name} length differs from timestamps")
        object.__setattr__(self, "timestamps", np.asarray(self.timestamps, dtype=np.int64))
        object.__setattr__(self, "raw", np.asarray(self.raw, dtype=np.float64))
        object.__setattr__(self, "p_value", np.asarray(self.p_value, dtype=np.float64))
        object.__setattr__(self, "label", np.asarray(self.label, dtype=np.int8))

    def __len__(self) -> int:
        return int(self.timestamps.shape[0])

    @property
    def anomaly_rows(self) -> np.ndarray:
        return np.flatnonzero(self.label == LABEL_ANOMALY)

    @property
    def anomaly_count(self) -> int:
        return int(np.sum(self.label == LABEL_ANOMALY))

    def tail(self, count: int) -> ScoreSeries:
        start = max(0, len(self) - count)
        return ScoreSeries(
            timestamps=self.timestamps[start:],
            raw=self.raw[start:],
            p_value=self.p_value[start:],
            label=self.label[start:],
            attribution={r - start: a for r, a in self.attribution.items() if r >= start},
            extras={k: np.asarray(v)[start:] for k, v in self.extras.items()},
        )

    def top_attribution(self, row: int) -> str:
        ranked = self.attribution.get(row)
        return ranked[0][0] if ranked else ""

    def to_frame(self) -> pd.DataFrame:
        data: dict[str, list[str]] = {
            "timestamp": [str(int(t)) for t in self.timestamps],
            "raw": [_fmt_float(v) for v in self.raw],
            "p_value": [_fmt_float(v) for v in self.p_value],
            "label": [_fmt_label(v) for v in self.label],
        }
        for name, values in self.extras.items():
            arr = np.asarray(values)
            if arr.dtype.kind == "f":
                data[name] = [_fmt_float(v) for v in arr]
            elif arr.dtype.kind == "b":
                data[name] = ["true" if v else "false" for v in arr]
            else:
                data[name] = [str(v) for v in arr.tolist()]
        return pd.DataFrame(data)

    def to_csv(self) -> bytes:
        return self.to_frame().to_csv(index=False, lineterminator="\n").encode("utf-8")

    def attribution_records(self) -> list[dict[str, Any]]:
        return [
            {
                "row": int(row),
                "timestamp": int(self.timestamps[row]),
                "contributions": [{"column": c, "weight": w} for c, w in ranked],
            }
            for row, ranked in sorted(self.attribution.items())
        ]

    @classmethod
    def from_csv(cls, raw: bytes | str, attribution: list[Mapping[str, Any]] | None = None) -> ScoreSeries:
        buf = io.BytesIO(raw) if isinstance(raw, bytes) else io.StringIO(raw)
        table = pd.read_csv(buf, dtype=str, keep_default_na=False)
        missing = [c for c in RESULT_COLUMNS if c not in table.columns]
        if missing:
            raise InvalidFrame(f"result file lacks columns {missing}")
        labels = np.array([LABEL_UNSCORED if v == UNSCORED else int(v) for v in table["label"]], dtype=np.int8)
        extras = {c: table[c].to_numpy(dtype=object) for c in table.columns if c not in RESULT_COLUMNS}
        attr = {
            int(rec["row"]): [(c["column"], float(c["weight"])) for c in rec["contributions"]]
            for rec in (attribution or [])
        }
        return cls(
            timestamps=table["timestamp"].astype(np.int64).to_numpy(),
            raw=pd.to_numeric(table["raw"].replace("", np.nan)).to_numpy(dtype=np.float64),
            p_value=pd.to_numeric(table["p_value"].replace("", np.nan)).to_numpy(dtype=np.float64),
            label=labels,
            attribution=attr,
            extras=extras,
        )

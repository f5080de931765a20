"""Dashboard reads: detected rows for one metric over a time range."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from scoring.series import ScoreSeries
from service import store as st
from service.errors import NoResults
from service.store import JobStore


@dataclass(frozen=True)
class QueryRow:
    timestamp: int
    metric: str
    raw: float | None
    p_value: float | None
    label: int
    top_attribution: str
    job_id: str

    def to_dict(self) -> dict[str, object]:
        return asdict(self)


def _optional(value: float) -> float | None:
    return None if np.isnan(value) else float(value)


def _series_jobs(store: JobStore, series: str) -> list[str]:
    ids = []
    for job in store.list():
        if job.state != st.SUCCEEDED:
            continue
        if series in store.request(job.id).get("target_columns", []):
            ids.append(job.id)
    return ids


def query_anomalies(store: JobStore, series: str, start: int | None = None, end: int | None = None,
                    label: int | None = None) -> list[QueryRow]:
    """Rows of every succeeded job that scored *series*, ``start <= timestamp <= end``.

    *series* is a target column name. Rows are ordered by timestamp, then by
    job submission order. Raises NoResults when nothing matches.
    """
    job_ids = _series_jobs(store, series)
    if not job_ids:
        raise NoResults(f"no succeeded job has scored {series!r}", series=series)
    rows: list[QueryRow] = []
    for job_id in job_ids:
        raw = store.read_bytes(job_id, st.RESULT_FILE)
        if raw is None:
            continue
        result = ScoreSeries.from_csv(raw, store.read_json(job_id, st.ATTRIBUTION_FILE))
        mask = np.ones(len(result), dtype=bool)
        if start is not None:
            mask &= result.timestamps >= start
        if end is not None:
            mask &= result.timestamps <= end
        if label is not None:
            mask &= result.label == label
        for i in np.flatnonzero(mask):
            rows.append(QueryRow(
                timestamp=int(result.timestamps[i]),
                metric=series,
                raw=_optional(result.raw[i]),
                p_value=_optional(result.p_value[i]),
                label=int(result.label[i]),
                top_attribution=result.top_attribution(int(i)),
                job_id=job_id,
            ))
    if not rows:
        raise NoResults(f"no rows for {series!r} in the requested range", series=series)
    # stable: equal timestamps keep job submission order
    rows.sort(key=lambda r: r.timestamp)
    return rows

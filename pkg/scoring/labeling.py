"""Turn p-values or raw scores into +1/-1 labels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from detectors.model import TrainStats
from scoring.errors import InvalidLabelingSpec, SpecMismatch

LABEL_NORMAL = 1
LABEL_ANOMALY = -1
LABEL_UNSCORED = 0

PVALUE_THRESHOLD = "pvalue_threshold"
CONTAMINATION_QUANTILE = "contamination_quantile"
STD_MULTIPLE = "std_multiple"
METHODS = (PVALUE_THRESHOLD, CONTAMINATION_QUANTILE, STD_MULTIPLE)

DEFAULT_METHOD = PVALUE_THRESHOLD
DEFAULT_THRESHOLD = 0.01


def labeling_violations(method: Any, threshold: Any) -> list[str]:
    if method not in METHODS:
        return [f"labeling_method must be one of {', '.join(METHODS)}, got {method!r}"]
    if isinstance(threshold, bool) or not isinstance(threshold, (int, float)) or not math.isfinite(threshold):
        return ["labeling_threshold must be a number"]
    if method in (PVALUE_THRESHOLD, CONTAMINATION_QUANTILE) and not 0 < threshold < 1:
        return [f"labeling_threshold must be in (0, 1) for {method}"]
    if method == STD_MULTIPLE and threshold <= 0:
        return ["labeling_threshold must be > 0 for std_multiple"]
    return []


@dataclass(frozen=True)
class LabelingSpec:
    labeling_method: str = DEFAULT_METHOD
    labeling_threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        errors = labeling_violations(self.labeling_method, self.labeling_threshold)
        if errors:
            raise InvalidLabelingSpec("; ".join(errors))

    def to_dict(self) -> dict[str, Any]:
        return {"labeling_method": self.labeling_method, "labeling_threshold": self.labeling_threshold}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> LabelingSpec:
        return cls(
            labeling_method=d.get("labeling_method") or DEFAULT_METHOD,
            labeling_threshold=d.get("labeling_threshold", DEFAULT_THRESHOLD),
        )


def contamination_count(threshold: float, n: int) -> int:
    # round first so 0.07 * 100 counts as 7, not 8
    return int(math.ceil(round(threshold * n, 9)))


def apply_labeling(spec: LabelingSpec, *, raw: np.ndarray | None = None,
                   p_values: np.ndarray | None = None,
                   stats: TrainStats | None = None) -> np.ndarray:
    """Label every row +1/-1, leaving unscored rows at 0.

    pvalue_threshold needs ``p_values``; the other methods need ``raw``.
    std_multiple compares against ``stats`` (the frozen training score
    statistics) or, without them, the statistics of the scored rows.
    """
    if spec.labeling_method == PVALUE_THRESHOLD:
        if p_values is None:
            raise SpecMismatch("pvalue_threshold labeling needs p-values")
        values = np.asarray(p_values, dtype=np.float64)
    else:
        if raw is None:
            raise SpecMismatch(f"{spec.labeling_method} labeling needs raw scores")
        values = np.asarray(raw, dtype=np.float64)

    scored = ~np.isnan(values)
    labels = np.full(values.shape, LABEL_UNSCORED, dtype=np.int8)
    labels[scored] = LABEL_NORMAL
    thr = spec.labeling_threshold

    if spec.labeling_method == PVALUE_THRESHOLD:
        labels[scored & (np.nan_to_num(values, nan=1.0) < thr)] = LABEL_ANOMALY
    elif spec.labeling_method == CONTAMINATION_QUANTILE:
        rows = np.flatnonzero(scored)
        k = min(contamination_count(thr, rows.size), rows.size)
        # highest score first, earlier row first among equal scores
        order = np.lexsort((rows, -values[rows]))
        labels[rows[order[:k]]] = LABEL_ANOMALY
    else:
        if stats is None:
            finite = values[scored]
            mean, std = (float(np.mean(finite)), float(np.std(finite))) if finite.size else (0.0, 0.0)
        else:
            mean, std = stats.mean, stats.std
        labels[scored & (np.nan_to_num(values, nan=-np.inf) > mean + thr * std)] = LABEL_ANOMALY
    return labels

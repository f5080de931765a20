"""Point-adjusted precision/recall/F1 and best-F1 threshold search.

Labels follow the service convention: -1 is anomalous (the positive class),
+1 is normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from evaluation.errors import LengthMismatch, NoAnomaliesInTruth


@dataclass(frozen=True)
class EvalResult:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    per_asset: Mapping[str, EvalResult] | None = field(default=None)

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> EvalResult:
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return cls(precision=p, recall=r, f1=f1, tp=tp, fp=fp, fn=fn)

    def metric(self, name: str) -> float:
        return {"f1": self.f1, "precision": self.precision, "recall": self.recall}[name]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
        }
        if self.per_asset is not None:
            out["per_asset"] = {k: v.to_dict() for k, v in self.per_asset.items()}
        return out


def _anomalous(labels: np.ndarray) -> np.ndarray:
    return np.asarray(labels) == -1


def _check_lengths(pred: np.ndarray, truth: np.ndarray) -> None:
    if np.shape(pred) != np.shape(truth):
        raise LengthMismatch(f"pred has {np.size(pred)} rows, truth has {np.size(truth)}")


def truth_segments(truth: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of anomalous truth rows as half-open (start, end) pairs."""
    mask = _anomalous(truth).astype(np.int8)
    edges = np.diff(np.concatenate(([0], mask, [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), ends.tolist()))


def point_adjust(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Flag a whole truth segment when any of its rows is predicted anomalous."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    _check_lengths(pred, truth)
    adjusted = np.where(_anomalous(pred), -1, 1).astype(np.int8)
    for start, end in truth_segments(truth):
        if np.any(adjusted[start:end] == -1):
            adjusted[start:end] = -1
    return adjusted


def prf1(pred: np.ndarray, truth: np.ndarray) -> EvalResult:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    _check_lengths(pred, truth)
    p = _anomalous(pred)
    t = _anomalous(truth)
    return EvalResult.from_counts(int(np.sum(p & t)), int(np.sum(p & ~t)), int(np.sum(~p & t)))


def threshold_labels(scores: np.ndarray, threshold: float) -> np.ndarray:
    """-1 where score >= threshold; unscored (NaN) rows are +1."""
    scores = np.asarray(scores, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        flagged = scores >= threshold
    return np.where(flagged, -1, 1).astype(np.int8)


def best_f1_threshold_sweep(raw: np.ndarray, truth: np.ndarray,
                            adjust: bool = True) -> tuple[float, EvalResult]:
    """Best (point-adjusted) F1 over every distinct cut of the scores.

    A row is predicted anomalous when its score is >= the threshold. The
    candidate thresholds are the smallest score (flag every scored row) and the
    midpoints between consecutive distinct scores. Thresholds are visited from
    high to low and only a strict improvement replaces the incumbent, so ties
    go to the higher threshold. Runs in O(n log n).
    """
    raw = np.asarray(raw, dtype=np.float64)
    truth = np.asarray(truth)
    _check_lengths(raw, truth)
    is_anom = _anomalous(truth)
    total_anom = int(is_anom.sum())
    if total_anom == 0:
        raise NoAnomaliesInTruth("truth has no anomalous rows")

    segment_of = np.full(raw.shape[0], -1, dtype=np.int64)
    seg_len: list[int] = []
    for s, (start, end) in enumerate(truth_segments(truth)):
        segment_of[start:end] = s
        seg_len.append(end - start)
    hit = np.zeros(len(seg_len), dtype=bool)

    scored = np.flatnonzero(~np.isnan(raw))
    if scored.size == 0:
        return float("inf"), EvalResult.from_counts(0, 0, total_anom)
    order = scored[np.argsort(-raw[scored], kind="stable")]
    values = raw[order]
    distinct_desc = np.unique(values)[::-1]

    tp = fp = 0
    best: tuple[float, EvalResult] | None = None
    pos = 0
    for j, level in enumerate(distinct_desc):
        while pos < order.size and values[pos] == level:
            row = order[pos]
            if is_anom[row]:
                if not adjust:
                    tp += 1
                elif not hit[segment_of[row]]:
                    hit[segment_of[row]] = True
                    tp += seg_len[segment_of[row]]
            else:
                fp += 1
            pos += 1
        if j + 1 < distinct_desc.size:
            lower = distinct_desc[j + 1]
            threshold = float((level + lower) / 2.0)
            # adjacent floats: the midpoint can round onto the lower value
            if not lower < threshold <= level:
                threshold = float(level)
        else:
            threshold = float(level)
        result = EvalResult.from_counts(tp, fp, total_anom - tp)
        if best is None or result.f1 > best[1].f1:
            best = (threshold, result)
    assert best is not None
    return best

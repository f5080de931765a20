"""Rank-average ensembling (AnomalyEnsembler)."""

from __future__ import annotations

from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from detectors import covariance, iforest, mixture, neighbors
from detectors.config import DEFAULTS
from detectors.errors import InvalidDetectorConfig, LengthMismatch
from detectors.model import RawScoreSeries

NAME = "AnomalyEnsembler"

FitFn = Callable[[np.ndarray, Mapping[str, Any], int], tuple[dict[str, Any], np.ndarray]]
ScoreFn = Callable[[Mapping[str, Any], np.ndarray], np.ndarray]

MEMBERS: dict[str, tuple[FitFn, ScoreFn]] = {
    "Covariance": (covariance.fit_arrays, covariance.score_arrays),
    "GMM_L0": (mixture.fit_l0, mixture.score_arrays),
    "GMM_L1": (mixture.fit_l1, mixture.score_arrays),
    "IsolationForest": (iforest.fit_arrays, iforest.score_arrays),
    "NearestNeighbor": (neighbors.fit_arrays, neighbors.score_arrays),
}


def rank_normalize(values: np.ndarray) -> np.ndarray:
    """Average ranks mapped to [0, 1]; NaN entries stay NaN."""
    out = np.full(values.shape, np.nan)
    finite = ~np.isnan(values)
    m = int(finite.sum())
    if m == 1:
        out[finite] = 0.5
    elif m > 1:
        out[finite] = (rankdata(values[finite], method="average") - 1.0) / (m - 1.0)
    return out


def ensemble_scores(series: Sequence[RawScoreSeries]) -> RawScoreSeries:
    """Pointwise mean of rank-normalised series.

    A row unscored in any input is unscored in the output.
    """
    if len(series) < 2:
        raise InvalidDetectorConfig(["ensemble needs at least 2 score series"])
    n = len(series[0])
    if any(len(s) != n for s in series):
        raise LengthMismatch(f"score series lengths differ: {[len(s) for s in series]}")
    stacked = np.vstack([s.values for s in series])
    unscored = np.any(np.isnan(stacked), axis=0)
    ranks = np.vstack([rank_normalize(np.where(unscored, np.nan, row)) for row in stacked])
    out = np.full(n, np.nan)
    out[~unscored] = ranks[:, ~unscored].mean(axis=0)
    return RawScoreSeries(out)


def ecdf_rank(reference_sorted: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Mid-rank position of *values* within a sorted reference sample, in [0, 1].

    Training and rescoring both go through this mapping, so a model rescoring
    its own training rows reproduces its training scores.
    """
    lo = np.searchsorted(reference_sorted, values, side="left")
    hi = np.searchsorted(reference_sorted, values, side="right")
    return (lo + hi) / (2.0 * reference_sorted.shape[0])


def _member_hp(name: str, seed: int) -> dict[str, Any]:
    return {**DEFAULTS[name], "seed": seed}


def fit_arrays(x: np.ndarray, hp: Mapping[str, Any], lookback: int = 0) -> tuple[dict[str, Any], np.ndarray]:
    seed = int(hp["seed"])
    members: list[dict[str, Any]] = []
    ranks = []
    for name in hp["members"]:
        fit, _ = MEMBERS[name]
        params, scores = fit(x, _member_hp(name, seed), 0)
        train_sorted = np.sort(scores)
        members.append({"name": name, "params": params, "train_sorted": train_sorted})
        ranks.append(ecdf_rank(train_sorted, scores))
    return {"members": members}, np.mean(ranks, axis=0)


def score_arrays(params: Mapping[str, Any], x: np.ndarray) -> np.ndarray:
    ranks = []
    for member in params["members"]:
        _, score = MEMBERS[member["name"]]
        ranks.append(ecdf_rank(np.asarray(member["train_sorted"]), score(member["params"], x)))
    return np.mean(ranks, axis=0)

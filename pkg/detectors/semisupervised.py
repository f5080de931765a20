"""Semi-supervised selection: train on normal rows, pick (estimator, threshold) on val."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from loguru import logger

from detectors.config import DEFAULT_SEED, DetectorConfig
from detectors.errors import InvalidDetectorConfig, NoFailuresInValidation, TrainContainsFailures
from detectors.model import FittedModel
from detectors.registry import ESTIMATORS, fit_model, score_model
from evaluation.metrics import EvalResult, best_f1_threshold_sweep
from tsdata.errors import MissingColumn
from tsdata.frame import LABEL_ANOMALY, MetricFrame

DEFAULT_CANDIDATES = ("IsolationForest", "NearestNeighbor", "Covariance", "DNN_AutoEncoder")


@dataclass(frozen=True)
class SemiSupervisedResult:
    model: FittedModel
    threshold: float
    f1: float
    leaderboard: list[dict[str, Any]] = field(default_factory=list)


def candidate_violations(candidates: Sequence[str]) -> list[str]:
    errors = []
    if not candidates:
        errors.append("algorithm_config.candidates must not be empty")
    for name in candidates:
        if name not in ESTIMATORS:
            errors.append(f"unknown candidate estimator {name!r}")
        elif ESTIMATORS[name].windowed:
            errors.append(f"candidate {name} needs a lookback window, not available here")
    return errors


def fit_semisupervised(train: MetricFrame, val: MetricFrame,
                       candidates: Sequence[str] = DEFAULT_CANDIDATES,
                       seed: int = DEFAULT_SEED) -> SemiSupervisedResult:
    """Fit every candidate on *train*, choose the one maximising val F1.

    Within an estimator the highest threshold reaching the best F1 is kept.
    Across estimators equal F1 goes to the higher threshold, then to the
    earlier candidate.
    """
    errors = candidate_violations(candidates)
    if errors:
        raise InvalidDetectorConfig(errors)
    if train.labels is None or val.labels is None:
        raise MissingColumn(train.label_column or "label")
    failures = int(np.sum(train.labels == LABEL_ANOMALY))
    if failures:
        raise TrainContainsFailures(f"train split holds {failures} failure rows", rows=failures)
    if not np.any(val.labels == LABEL_ANOMALY):
        raise NoFailuresInValidation("validation split has no failure rows")

    board: list[dict[str, Any]] = []
    best: tuple[FittedModel, float, EvalResult] | None = None
    for name in candidates:
        cfg = DetectorConfig(name, algorithm_config={"seed": seed})
        model = fit_model(train, cfg)
        val_scores = score_model(model, val).values
        threshold, result = best_f1_threshold_sweep(val_scores, val.labels, adjust=False)
        board.append({"estimator": name, "threshold": threshold, "f1": result.f1,
                      "precision": result.precision, "recall": result.recall})
        logger.info(f"{name}: val f1 {result.f1:.4f} at threshold {threshold:.6g}")
        if best is None or (result.f1, threshold) > (best[2].f1, best[1]):
            best = (model, threshold, result)

    assert best is not None
    model, threshold, result = best
    params = {**model.parameters, "threshold": threshold}
    chosen = FittedModel(model.kind, params, model.train_stats, model.schema, model.lookback,
                         {**model.config, "selection": "semisupervised"}, model.norm)
    return SemiSupervisedResult(model=chosen, threshold=threshold, f1=result.f1, leaderboard=board)

"""Dispatch from estimator name to its fit/score functions.

Every estimator module exposes ``fit_arrays(values, hp, lookback)`` returning
``(parameters, training scores)`` and ``score_arrays(parameters, values)``.
The named ``fit_*`` helpers below wrap them into FittedModel values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np
from loguru import logger

from detectors import autoencoder, covariance, ensemble, iforest, mixture, neighbors, windowed
from detectors.config import DetectorConfig
from detectors.errors import NotAMixtureModel, SchemaMismatch
from detectors.model import FittedModel, RawScoreSeries, TrainStats
from tsdata.frame import MetricFrame, WindowSpec

FitFn = Callable[[np.ndarray, Mapping[str, Any], int], tuple[dict[str, Any], np.ndarray]]
ScoreFn = Callable[[Mapping[str, Any], np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Estimator:
    name: str
    fit: FitFn
    score: ScoreFn
    windowed: bool = False


ESTIMATORS: dict[str, Estimator] = {
    e.name: e
    for e in (
        Estimator("DNN_AutoEncoder", autoencoder.fit_arrays, autoencoder.score_arrays),
        Estimator("WindowedLinear", windowed.fit_arrays, windowed.score_arrays, windowed=True),
        Estimator("Covariance", covariance.fit_arrays, covariance.score_arrays),
        Estimator("GMM_L0", mixture.fit_l0, mixture.score_arrays),
        Estimator("GMM_L1", mixture.fit_l1, mixture.score_arrays),
        Estimator("IsolationForest", iforest.fit_arrays, iforest.score_arrays),
        Estimator("NearestNeighbor", neighbors.fit_arrays, neighbors.score_arrays),
        Estimator("AnomalyEnsembler", ensemble.fit_arrays, ensemble.score_arrays),
    )
}


def fit_score(frame: MetricFrame, cfg: DetectorConfig,
              window: WindowSpec | None = None) -> tuple[FittedModel, RawScoreSeries]:
    """Fit on every row of *frame* and return the model with its training scores.

    Training scores are what batch detection reports; for NearestNeighbor they
    exclude each row from its own neighbourhood.
    """
    estimator = ESTIMATORS[cfg.anomaly_estimator]
    lookback = (window or WindowSpec()).lookback_window if estimator.windowed else 0
    logger.info(f"fitting {estimator.name} on {len(frame)} rows x {frame.width} columns")
    params, scores = estimator.fit(frame.values(), cfg.params, lookback)
    model = FittedModel(
        kind=estimator.name,
        parameters=params,
        train_stats=TrainStats.from_scores(scores),
        schema=tuple(frame.names),
        lookback=lookback,
        config={**cfg.to_dict(), "params": cfg.params},
    )
    logger.debug(f"train stats mean={model.train_stats.mean:.6g} std={model.train_stats.std:.6g}")
    return model, RawScoreSeries(scores)


def fit_model(frame: MetricFrame, cfg: DetectorConfig, window: WindowSpec | None = None) -> FittedModel:
    return fit_score(frame, cfg, window)[0]


def score_model(model: FittedModel, frame: MetricFrame) -> RawScoreSeries:
    model.check_schema(frame.names)
    return RawScoreSeries(ESTIMATORS[model.kind].score(model.parameters, frame.values()))


def fit_reconstruct_ad(frame: MetricFrame, cfg: DetectorConfig | None = None) -> FittedModel:
    return fit_model(frame, cfg or DetectorConfig("DNN_AutoEncoder"))


def score_reconstruct_ad(model: FittedModel, frame: MetricFrame) -> RawScoreSeries:
    return score_model(model, frame)


def fit_pred_ad(frame: MetricFrame, spec: WindowSpec, cfg: DetectorConfig | None = None) -> FittedModel:
    return fit_model(frame, cfg or DetectorConfig("WindowedLinear"), spec)


def fit_covariance(frame: MetricFrame, cfg: DetectorConfig | None = None) -> FittedModel:
    return fit_model(frame, cfg or DetectorConfig("Covariance"))


def fit_gmm(frame: MetricFrame, variant: str = "L0", cfg: DetectorConfig | None = None) -> FittedModel:
    name = f"GMM_{variant}"
    if cfg is not None and cfg.anomaly_estimator != name:
        cfg = DetectorConfig(name, "RelationshipAD", {k: v for k, v in cfg.algorithm_config.items()
                                                        if k in DetectorConfig(name).params})
    return fit_model(frame, cfg or DetectorConfig(name))


def fit_isolation_forest(frame: MetricFrame, cfg: DetectorConfig | None = None) -> FittedModel:
    return fit_model(frame, cfg or DetectorConfig("IsolationForest"))


def fit_nearest_neighbor(frame: MetricFrame, cfg: DetectorConfig | None = None) -> FittedModel:
    return fit_model(frame, cfg or DetectorConfig("NearestNeighbor"))


@dataclass(frozen=True)
class ModeAssignment:
    mode: int
    responsibility: float
    unseen: bool
    score: float


def identify_modes(model: FittedModel, frame: MetricFrame) -> list[ModeAssignment]:
    """Mode index, its responsibility and the unseen-mode flag for every row.

    A row is in an unseen mode when its (shifted) negative log-likelihood is
    above ``train mean + 3 * train std``.
    """
    if model.kind not in ("GMM_L0", "GMM_L1"):
        raise NotAMixtureModel(f"{model.kind} has no modes")
    model.check_schema(frame.names)
    x = frame.values()
    resp = mixture.responsibilities(model.parameters, x)
    scores = mixture.score_arrays(model.parameters, x)
    cutoff = model.train_stats.mean + 3.0 * model.train_stats.std
    modes = np.argmax(resp, axis=1)
    return [
        ModeAssignment(int(m), float(resp[i, m]), bool(scores[i] > cutoff), float(scores[i]))
        for i, m in enumerate(modes)
    ]


def identify_mode(model: FittedModel, row: Mapping[str, float] | np.ndarray) -> ModeAssignment:
    if isinstance(row, Mapping):
        missing = [c for c in model.schema if c not in row]
        if missing or len(row) != len(model.schema):
            raise SchemaMismatch(model.schema, list(row))
        values = {name: np.array([float(row[name])]) for name in model.schema}
    else:
        arr = np.asarray(row, dtype=np.float64).ravel()
        if arr.shape[0] != len(model.schema):
            raise SchemaMismatch(model.schema, [f"col{i}" for i in range(arr.shape[0])])
        values = {name: arr[i:i + 1] for i, name in enumerate(model.schema)}
    frame = MetricFrame(timestamps=np.array([0]), columns=values)
    return identify_modes(model, frame)[0]

"""Raw scores to ScoreSeries, and stream scoring of recent rows."""

from __future__ import annotations

import numpy as np
from loguru import logger

from detectors.model import FittedModel, RawScoreSeries, TrainStats
from detectors.registry import score_model
from scoring.errors import InsufficientRecentData, ModelNotFitted
from scoring.labeling import LabelingSpec, apply_labeling
from scoring.pvalues import chi_square_pvalues
from scoring.series import ScoreSeries
from tsdata.frame import MetricFrame, WindowSpec
from tsdata.transforms import apply_norm


def build_score_series(timestamps: np.ndarray, raw: RawScoreSeries, stats: TrainStats,
                       labeling: LabelingSpec) -> ScoreSeries:
    p = chi_square_pvalues(raw, stats)
    labels = apply_labeling(labeling, raw=raw.values, p_values=p, stats=stats)
    return ScoreSeries(timestamps=timestamps, raw=raw.values, p_value=p, label=labels)


def stream_score(model: FittedModel | None, recent: MetricFrame, spec: WindowSpec,
                 labeling: LabelingSpec) -> ScoreSeries:
    """Score the last ``observation_window`` rows of *recent* against a frozen model.

    Windowed models also consume the ``lookback`` rows before the observation
    window. Normalization and p-value statistics are the ones captured at fit
    time, so labels mean the same thing as in batch mode.
    """
    if model is None:
        raise ModelNotFitted("stream scoring needs a fitted model")
    required = spec.observation_window + model.lookback
    if len(recent) < required:
        raise InsufficientRecentData(len(recent), required)
    frame = recent.select(model.schema).tail(required)
    if model.norm is not None:
        frame = apply_norm(frame, model.norm)
    raw = score_model(model, frame).tail(spec.observation_window)
    timestamps = frame.timestamps[-spec.observation_window:]
    series = build_score_series(timestamps, raw, model.train_stats, labeling)
    logger.debug(f"stream scored {len(series)} rows, {series.anomaly_count} anomalous")
    return series

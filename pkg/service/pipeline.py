"""The detection pipeline shared by service jobs and ``adservice detect``.

ingest -> parse -> limit checks -> normalize -> optional feature selection
-> fit per endpoint -> raw scores -> p-values -> labels -> attribution
(multivariate only) -> result files.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
from loguru import logger

from detectors.config import DEFAULTS, DetectorConfig
from detectors.mixture import heldout_log_likelihood
from detectors.model import FittedModel, RawScoreSeries, save_model
from detectors.regression import RIDGE_GRID, RegressionSettings, fit_regression_ad
from detectors.registry import fit_model, fit_score, identify_modes, score_model
from detectors.semisupervised import DEFAULT_CANDIDATES, fit_semisupervised
from evaluation.metrics import prf1, threshold_labels
from scoring.attribution import pca_attribution
from scoring.errors import NotMultivariate, TooFewNormalRows
from scoring.labeling import LABEL_ANOMALY, LABEL_NORMAL, LabelingSpec
from scoring.pvalues import chi_square_pvalues
from scoring.series import ScoreSeries
from scoring.stream import build_score_series, stream_score
from service.config import ServiceConfig
from service.errors import AuthFailed, FetchError
from service.limits import InstanceSize, check_bytes, check_frame
from service.objstore import ObjectLocator, fetch_object
from service.schema import MIXTURE, MULTIVARIATE, REGRESSION, SEMISUPERVISED, DataRef, DetectionRequest
from service.store import ATTRIBUTION_FILE, MODEL_FILE, RESULT_FILE, SUMMARY_FILE, json_safe, write_atomic
from tsdata.csvio import parse_csv
from tsdata.errors import AllColumnsDropped, EmptyFitRange
from tsdata.frame import ColumnRoles, MetricFrame
from tsdata.transforms import apply_norm, split_by_column, unsupervised_feature_select, zscore_normalize
from utils.deadline import checkpoint

Fetcher = Callable[..., bytes]


@dataclass
class DetectionOutcome:
    series: ScoreSeries
    model: FittedModel | None
    summary: dict[str, Any] = field(default_factory=dict)

    def write(self, out_dir: Path) -> dict[str, Path]:
        """Write result.csv, summary.json, model.json and attribution.json (when present)."""
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"result": out_dir / RESULT_FILE, "summary": out_dir / SUMMARY_FILE}
        write_atomic(paths["result"], self.series.to_csv())
        write_atomic(paths["summary"], _dumps(self.summary))
        if self.series.attribution:
            paths["attribution"] = out_dir / ATTRIBUTION_FILE
            write_atomic(paths["attribution"], _dumps(self.series.attribution_records()))
        if self.model is not None:
            paths["model"] = out_dir / MODEL_FILE
            save_model(self.model, paths["model"])
        return paths


def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _dumps(obj: Any) -> str:
    return json.dumps(json_safe(_plain(obj)), indent=2, sort_keys=True, allow_nan=False) + "\n"


def read_input(ref: DataRef, size: InstanceSize, config: ServiceConfig,
               fetch: Fetcher = fetch_object, sleep: Callable[[float], None] = time.sleep) -> bytes:
    """Bytes of a data reference, bounded by the instance byte cap."""
    if ref.kind == "inline":
        data = (ref.text or "").encode("utf-8")
    elif ref.kind == "path":
        path = Path(ref.path or "")
        if not path.is_file():
            raise FetchError(f"no such file: {path}")
        check_bytes(size, path.stat().st_size)
        data = path.read_bytes()
    else:
        endpoint = ref.endpoint or config.objstore_endpoint
        if not endpoint:
            raise FetchError("no object store endpoint: set ADS_OBJSTORE_ENDPOINT or data_file.endpoint")
        credentials = config.credentials(ref.credentials)
        if ref.credentials not in (None, "", "default") and credentials is None:
            raise AuthFailed(f"credentials reference {ref.credentials!r} is not set in the environment")
        data = fetch(ObjectLocator(endpoint, ref.bucket or "", ref.key or ""), size.max_bytes,
                     credentials=credentials, attempts=config.fetch_attempts,
                     backoff_base=config.fetch_backoff_base, sleep=sleep)
    check_bytes(size, len(data))
    return data


def _select_columns(frame: MetricFrame, columns: list[str], enabled: bool,
                    reference: MetricFrame | None = None) -> tuple[list[str], dict[str, str]]:
    if not enabled:
        return columns, {}
    selection = unsupervised_feature_select(frame if reference is None else reference, columns)
    if selection.all_dropped:
        raise AllColumnsDropped(f"feature selection dropped every column: {sorted(selection.dropped)}")
    return selection.retained, dict(selection.dropped)


def _attribute(series: ScoreSeries, basis: MetricFrame, normal_rows: np.ndarray,
               query: MetricFrame | None = None) -> ScoreSeries:
    rows = series.anomaly_rows
    if rows.size == 0:
        return series
    try:
        attribution = pca_attribution(basis, rows, normal_rows, query=query)
    except (NotMultivariate, TooFewNormalRows) as e:
        logger.warning(f"attribution skipped: {e.message}")
        return series
    return ScoreSeries(series.timestamps, series.raw, series.p_value, series.label,
                       attribution=attribution, extras=series.extras)


def _detect_unsupervised(req: DetectionRequest, frame: MetricFrame,
                         recent: MetricFrame | None) -> DetectionOutcome:
    assert req.detector is not None
    columns, dropped = _select_columns(frame, list(req.roles.target_columns), req.unsupervised_fs)
    frame_n, norm = zscore_normalize(frame.select(columns))
    checkpoint("normalize")
    model, raw = fit_score(frame_n, req.detector, req.window)
    model = model.with_norm(norm)
    checkpoint("fit")
    train_series = build_score_series(frame_n.timestamps, raw, model.train_stats, req.labeling)
    multivariate = req.endpoint == MULTIVARIATE

    if req.prediction_type == "stream":
        assert recent is not None
        series = stream_score(model, recent, req.window, req.labeling)
        if multivariate:
            query = apply_norm(recent.select(model.schema).tail(len(series)), norm)
            normal = np.flatnonzero(train_series.label == LABEL_NORMAL)
            series = _attribute(series, frame_n, normal, query)
    else:
        series = train_series
        if multivariate:
            series = _attribute(series, frame_n, np.flatnonzero(series.label == LABEL_NORMAL))

    summary = {
        "estimator": model.kind,
        "algorithm_type": req.detector.algorithm_type,
        "columns": columns,
        "dropped_columns": dropped,
        "prediction_type": req.prediction_type,
        "labeling": req.labeling.to_dict(),
        "lookback": model.lookback,
        "evaluation": None,
    }
    return DetectionOutcome(series=series, model=model, summary=summary)


def _detect_regression(req: DetectionRequest, frame: MetricFrame) -> DetectionOutcome:
    features, dropped = _select_columns(frame, list(req.roles.feature_columns), req.unsupervised_fs)
    roles = ColumnRoles(req.roles.time_column, req.roles.target_columns, req.roles.time_format,
                        feature_columns=tuple(features))
    settings = RegressionSettings(
        train_test_split=req.train_test_split,
        train_cv_split=req.train_cv_split,
        ridge_grid=tuple(req.algorithm_config.get("ridge_grid", RIDGE_GRID)),
    )
    model, scores = fit_regression_ad(frame, roles, settings, seed=req.seed)
    checkpoint("fit")
    labeling = LabelingSpec()
    series = build_score_series(frame.timestamps, RawScoreSeries(scores), model.train_stats, labeling)
    params = model.parameters
    summary = {
        "estimator": model.kind,
        "target": params["target"],
        "columns": features,
        "dropped_columns": dropped,
        "selected": params["selected"],
        "leaderboard": params["leaderboard"],
        "train_rows": params["n_train"],
        "labeling": labeling.to_dict(),
        "evaluation": None,
    }
    return DetectionOutcome(series=series, model=model, summary=summary)


def _mixture_params(variant: str, cfg: Mapping[str, Any]) -> dict[str, Any]:
    allowed = DEFAULTS[f"GMM_{variant}"]
    return {k: v for k, v in cfg.items() if k in allowed}


def _detect_mixture(req: DetectionRequest, frame: MetricFrame) -> DetectionOutcome:
    n_fit = int(np.floor(req.train_test_split * len(frame)))
    if n_fit < 1:
        raise EmptyFitRange(f"train_test_split={req.train_test_split} leaves no rows to fit")
    fit_rows = slice(0, n_fit)
    columns, dropped = _select_columns(frame, list(req.roles.target_columns), req.unsupervised_fs,
                                       reference=frame.take(fit_rows))
    frame_n, norm = zscore_normalize(frame.select(columns), fit_rows=fit_rows)
    fit_frame = frame_n.take(fit_rows)

    variant = req.algorithm_config.get("variant", "auto")
    heldout: dict[str, float] = {}
    if variant == "auto":
        for candidate in ("L0", "L1"):
            hp = DetectorConfig(f"GMM_{candidate}", "RelationshipAD",
                                _mixture_params(candidate, req.algorithm_config)).params
            heldout[candidate] = heldout_log_likelihood(fit_frame.values(), candidate, hp, req.train_cv_split)
            checkpoint("variant selection")
        variant = "L1" if heldout["L1"] > heldout["L0"] else "L0"
        logger.info(f"mixture variant {variant} (held-out ll L0={heldout['L0']:.4f} L1={heldout['L1']:.4f})")

    cfg = DetectorConfig(f"GMM_{variant}", "RelationshipAD", _mixture_params(variant, req.algorithm_config))
    model = fit_model(fit_frame, cfg).with_norm(norm)
    checkpoint("fit")
    raw = score_model(model, frame_n)
    modes = identify_modes(model, frame_n)
    unseen = np.array([m.unseen for m in modes], dtype=bool)
    series = ScoreSeries(
        timestamps=frame_n.timestamps,
        raw=raw.values,
        p_value=chi_square_pvalues(raw, model.train_stats),
        label=np.where(unseen, LABEL_ANOMALY, LABEL_NORMAL),
        extras={
            "mode": np.array([m.mode for m in modes], dtype=np.int64),
            "responsibility": np.array([m.responsibility for m in modes], dtype=np.float64),
            "unseen_mode": unseen,
        },
    )
    counts = np.bincount(series.extras["mode"], minlength=int(model.parameters["n_components"]))
    summary = {
        "estimator": model.kind,
        "variant": variant,
        "heldout_log_likelihood": heldout or None,
        "columns": columns,
        "dropped_columns": dropped,
        "train_rows": n_fit,
        "n_components": int(model.parameters["n_components"]),
        "bic": model.parameters["bic"],
        "mode_counts": counts.tolist(),
        "unseen_rows": int(unseen.sum()),
        "evaluation": None,
    }
    return DetectionOutcome(series=series, model=model, summary=summary)


def _detect_semisupervised(req: DetectionRequest, frame: MetricFrame) -> DetectionOutcome:
    train, val, test = split_by_column(frame)
    columns, dropped = _select_columns(train, list(req.roles.target_columns), req.unsupervised_fs)
    train_n, norm = zscore_normalize(train.select(columns))
    val_n = apply_norm(val.select(columns), norm)
    target = test if len(test) else frame
    target_n = apply_norm(target.select(columns), norm)
    candidates = req.algorithm_config.get("candidates", list(DEFAULT_CANDIDATES))
    result = fit_semisupervised(train_n, val_n, candidates, seed=req.seed)
    checkpoint("fit")
    model = result.model.with_norm(norm)
    raw = score_model(model, target_n)
    labels = threshold_labels(raw.values, result.threshold)
    series = ScoreSeries(target_n.timestamps, raw.values, chi_square_pvalues(raw, model.train_stats), labels)

    evaluation = None
    if target.labels is not None:
        scores = prf1(labels, target.labels)
        evaluation = {name: scores.metric(name) for name in req.evaluation_metrics}
    summary = {
        "estimator": model.kind,
        "columns": columns,
        "dropped_columns": dropped,
        "split_rows": {"train": len(train), "val": len(val), "test": len(test)},
        "scored_split": "test" if len(test) else "all",
        "threshold": result.threshold,
        "val_f1": result.f1,
        "leaderboard": result.leaderboard,
        "evaluation": evaluation,
    }
    return DetectionOutcome(series=series, model=model, summary=summary)


def run_detection(req: DetectionRequest, data: bytes, size: InstanceSize,
                  recent_data: bytes | None = None) -> DetectionOutcome:
    """Run one request over already-ingested bytes."""
    frame = parse_csv(data, req.roles)
    check_frame(size, frame)
    logger.info(f"{req.endpoint}: parsed {len(frame)} rows x {frame.width} columns")
    checkpoint("parse")

    if req.endpoint == REGRESSION:
        outcome = _detect_regression(req, frame)
    elif req.endpoint == MIXTURE:
        outcome = _detect_mixture(req, frame)
    elif req.endpoint == SEMISUPERVISED:
        outcome = _detect_semisupervised(req, frame)
    else:
        recent = None
        if req.prediction_type == "stream":
            assert recent_data is not None
            recent = parse_csv(recent_data, ColumnRoles(req.roles.time_column, req.roles.target_columns,
                                                        req.roles.time_format))
            check_frame(size, recent)
        outcome = _detect_unsupervised(req, frame, recent)

    outcome.summary.update(
        endpoint=req.endpoint,
        rows=len(frame),
        scored_rows=int(np.sum(~np.isnan(outcome.series.raw))),
        anomaly_count=outcome.series.anomaly_count,
        train_stats=outcome.model.train_stats.to_dict() if outcome.model else None,
        seed=req.seed,
        instance_size=req.instance_size,
    )
    logger.success(f"{req.endpoint}: {outcome.series.anomaly_count} anomalous rows of {len(outcome.series)}")
    return outcome

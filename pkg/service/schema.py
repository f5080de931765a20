"""Request validation against the argument/endpoint matrix.

Each of the five endpoints accepts a fixed subset of the 22 request
arguments. :func:`validate_request` reports every problem at once and, for
a valid body, returns a :class:`DetectionRequest` with defaults filled in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from detectors.config import DEFAULT_SEED, DEFAULTS, DetectorConfig, config_violations
from detectors.semisupervised import DEFAULT_CANDIDATES, candidate_violations
from scoring.labeling import DEFAULT_METHOD, DEFAULT_THRESHOLD, LabelingSpec, labeling_violations
from service.errors import UnknownEndpoint, ValidationFailed
from service.limits import SIZE_LABELS
from tsdata.frame import ColumnRoles, WindowSpec

UNIVARIATE = "univariate"
MULTIVARIATE = "multivariate"
SEMISUPERVISED = "semisupervised"
REGRESSION = "regression"
MIXTURE = "mixture"
ENDPOINTS = (UNIVARIATE, MULTIVARIATE, SEMISUPERVISED, REGRESSION, MIXTURE)

_ALL = frozenset(ENDPOINTS)
_UNSUPERVISED = frozenset({UNIVARIATE, MULTIVARIATE})

# argument -> endpoints that accept it
MATRIX: dict[str, frozenset[str]] = {
    "data_file": _ALL,
    "time_column": _ALL,
    "time_format": _ALL,
    "target_columns": _ALL,
    "label_column": frozenset({SEMISUPERVISED}),
    "feature_columns": frozenset({REGRESSION}),
    "prediction_type": _UNSUPERVISED,
    "recent_data": _UNSUPERVISED,
    "algorithm_config": _ALL,
    "algorithm_type": _UNSUPERVISED,
    "anomaly_estimator": _UNSUPERVISED,
    "lookback_window": _UNSUPERVISED,
    "observation_window": _UNSUPERVISED,
    "labeling_method": _UNSUPERVISED,
    "labeling_threshold": _UNSUPERVISED,
    "train_val_test_column": frozenset({SEMISUPERVISED}),
    "evaluation_metrics": _ALL,
    "evaluation_time": _ALL,
    "instance_size": _ALL,
    "unsupervised_fs": _ALL,
    "train_test_split": frozenset({REGRESSION, MIXTURE}),
    "train_cv_split": frozenset({REGRESSION, MIXTURE}),
}

REQUIRED: dict[str, tuple[str, ...]] = {
    UNIVARIATE: ("data_file", "time_column", "target_columns"),
    MULTIVARIATE: ("data_file", "time_column", "target_columns"),
    SEMISUPERVISED: ("data_file", "time_column", "target_columns", "label_column", "train_val_test_column"),
    REGRESSION: ("data_file", "time_column", "target_columns", "feature_columns"),
    MIXTURE: ("data_file", "time_column", "target_columns"),
}

PREDICTION_TYPES = ("batch", "stream")
EVALUATION_METRICS = ("f1", "precision", "recall")
MIXTURE_VARIANTS = ("auto", "L0", "L1")
DEFAULT_TIME_FORMAT = "%Y-%m-%d %H:%M:%S"
DEFAULT_INSTANCE_SIZE = "M"
DEFAULT_TRAIN_TEST_SPLIT = 0.8
DEFAULT_TRAIN_CV_SPLIT = 5

# algorithm_config keys for the endpoints without an estimator choice
_ENDPOINT_CONFIG_KEYS = {
    REGRESSION: {"ridge_grid", "seed"},
    MIXTURE: {"variant", "max_components", "l1_weight", "max_iter", "tol", "reg_covar", "seed"},
    SEMISUPERVISED: {"candidates", "seed"},
}


@dataclass(frozen=True)
class DataRef:
    """Where a request's rows come from.

    ``inline`` carries CSV text in the body; ``object`` names a bucket/key on an
    object store with a credentials *reference* (never a secret); ``path`` is a
    local file, accepted only when the service allows it.
    """

    kind: str
    text: str | None = None
    bucket: str | None = None
    key: str | None = None
    endpoint: str | None = None
    credentials: str | None = None
    path: str | None = None

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "inline":
            return {"inline": True}
        if self.kind == "path":
            return {"path": self.path}
        return {k: v for k, v in (("bucket", self.bucket), ("key", self.key), ("endpoint", self.endpoint),
                                  ("credentials", self.credentials)) if v is not None}


@dataclass(frozen=True)
class DetectionRequest:
    endpoint: str
    data_ref: DataRef
    roles: ColumnRoles
    prediction_type: str = "batch"
    recent_data: DataRef | None = None
    detector: DetectorConfig | None = None
    window: WindowSpec = field(default_factory=WindowSpec)
    labeling: LabelingSpec = field(default_factory=LabelingSpec)
    algorithm_config: Mapping[str, Any] = field(default_factory=dict)
    evaluation_metrics: tuple[str, ...] = ("f1",)
    evaluation_time: float | None = None
    instance_size: str = DEFAULT_INSTANCE_SIZE
    unsupervised_fs: bool = False
    train_test_split: float = DEFAULT_TRAIN_TEST_SPLIT
    train_cv_split: int = DEFAULT_TRAIN_CV_SPLIT

    @property
    def seed(self) -> int:
        if self.detector is not None:
            return self.detector.seed
        return int(self.algorithm_config.get("seed", DEFAULT_SEED))

    def to_dict(self) -> dict[str, Any]:
        """The normalized body, using argument names, without inline data."""
        out: dict[str, Any] = {
            "endpoint": self.endpoint,
            "data_file": self.data_ref.to_dict(),
            "time_column": self.roles.time_column,
            "time_format": self.roles.time_format,
            "target_columns": list(self.roles.target_columns),
            "algorithm_config": dict(self.algorithm_config),
            "evaluation_metrics": list(self.evaluation_metrics),
            "evaluation_time": self.evaluation_time,
            "instance_size": self.instance_size,
            "unsupervised_fs": self.unsupervised_fs,
        }
        if self.endpoint == SEMISUPERVISED:
            out["label_column"] = self.roles.label_column
            out["train_val_test_column"] = self.roles.split_column
        if self.endpoint == REGRESSION:
            out["feature_columns"] = list(self.roles.feature_columns)
        if self.endpoint in (REGRESSION, MIXTURE):
            out["train_test_split"] = self.train_test_split
            out["train_cv_split"] = self.train_cv_split
        if self.endpoint in _UNSUPERVISED:
            assert self.detector is not None
            out.update(
                prediction_type=self.prediction_type,
                algorithm_type=self.detector.algorithm_type,
                anomaly_estimator=self.detector.anomaly_estimator,
                lookback_window=self.window.lookback_window,
                observation_window=self.window.observation_window,
                **self.labeling.to_dict(),
            )
            if self.recent_data is not None:
                out["recent_data"] = self.recent_data.to_dict()
        return out


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_name(v: Any) -> bool:
    return isinstance(v, str) and bool(v.strip())


def _data_ref(name: str, value: Any, allow_local_paths: bool, errors: list[str]) -> DataRef | None:
    if isinstance(value, str):
        if not value.strip():
            errors.append(f"{name} must not be empty")
            return None
        return DataRef("inline", text=value)
    if not isinstance(value, Mapping):
        errors.append(f"{name} must be CSV text or a locator object")
        return None
    if "path" in value:
        if not allow_local_paths:
            errors.append(f"{name}: local paths are disabled on this service")
            return None
        if not _is_name(value["path"]):
            errors.append(f"{name}.path must be a non-empty string")
            return None
        return DataRef("path", path=str(value["path"]))
    unknown = sorted(set(value) - {"bucket", "key", "endpoint", "credentials"})
    if unknown:
        errors.append(f"{name}: unknown locator fields {', '.join(unknown)}")
    missing = [k for k in ("bucket", "key") if not _is_name(value.get(k))]
    if missing:
        errors.append(f"{name}: locator needs {' and '.join(missing)}")
    creds = value.get("credentials")
    if creds is not None and not _is_name(creds):
        errors.append(f"{name}.credentials must be a named reference, not inline secrets")
    endpoint = value.get("endpoint")
    if endpoint is not None and not (isinstance(endpoint, str) and endpoint.startswith(("http://", "https://"))):
        errors.append(f"{name}.endpoint must be an http(s) URL")
    if unknown or missing or (creds is not None and not _is_name(creds)):
        return None
    return DataRef("object", bucket=value["bucket"], key=value["key"], endpoint=endpoint, credentials=creds)


def _names(name: str, value: Any, errors: list[str]) -> tuple[str, ...] | None:
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not all(_is_name(v) for v in value):
        errors.append(f"{name} must be a list of column names")
        return None
    if len(set(value)) != len(value):
        errors.append(f"{name} has duplicate names")
    return tuple(value)


def _target_count_errors(endpoint: str, targets: tuple[str, ...]) -> list[str]:
    n = len(targets)
    if n == 0:
        return ["target_columns must not be empty"]
    if endpoint == UNIVARIATE and n != 1:
        return [f"target_columns must hold exactly one column for univariate, got {n}"]
    if endpoint == MULTIVARIATE and n < 2:
        return [f"target_columns must hold at least two columns for multivariate, got {n}"]
    if endpoint == REGRESSION and n != 1:
        return [f"target_columns must hold exactly one column for regression, got {n}"]
    return []


def _endpoint_config_errors(endpoint: str, cfg: Mapping[str, Any]) -> list[str]:
    errors = []
    unknown = sorted(set(cfg) - _ENDPOINT_CONFIG_KEYS[endpoint])
    if unknown:
        errors.append(f"algorithm_config: unknown keys for {endpoint}: {', '.join(unknown)}")
    if "seed" in cfg and not _is_int(cfg["seed"]):
        errors.append("algorithm_config.seed must be an integer")
    if endpoint == REGRESSION and "ridge_grid" in cfg:
        grid = cfg["ridge_grid"]
        if not isinstance(grid, list) or not grid or not all(_is_number(a) and a > 0 for a in grid):
            errors.append("algorithm_config.ridge_grid must be a non-empty list of positive numbers")
    if endpoint == SEMISUPERVISED and "candidates" in cfg:
        cands = cfg["candidates"]
        if not isinstance(cands, list):
            errors.append("algorithm_config.candidates must be a list of estimator names")
        else:
            errors.extend(f"algorithm_config: {e}" for e in candidate_violations(cands))
    if endpoint == MIXTURE:
        if cfg.get("variant", "auto") not in MIXTURE_VARIANTS:
            errors.append(f"algorithm_config.variant must be one of {', '.join(MIXTURE_VARIANTS)}")
        hp = {k: v for k, v in cfg.items() if k not in ("variant", "seed") and k in DEFAULTS["GMM_L1"]}
        errors.extend(config_violations(None, "GMM_L1", hp))
    return errors


def validate_request(endpoint: str, payload: Mapping[str, Any],
                     allow_local_paths: bool = False) -> DetectionRequest:
    """Check *payload* for *endpoint* and return the normalized request.

    Raises :class:`ValidationFailed` listing every violation; each message
    starts with the offending argument name.
    """
    if endpoint not in ENDPOINTS:
        raise UnknownEndpoint([f"unknown endpoint {endpoint!r}; valid: {', '.join(ENDPOINTS)}"])
    if not isinstance(payload, Mapping):
        raise ValidationFailed(["request body must be an object"])
    body = dict(payload)
    if "target_column" in body and "target_columns" not in body:
        body["target_columns"] = body.pop("target_column")

    errors: list[str] = []
    for name in body:
        if name not in MATRIX:
            errors.append(f"{name} is not a known argument")
        elif endpoint not in MATRIX[name]:
            errors.append(f"{name} not accepted by the {endpoint} endpoint")
    accepted = {k: v for k, v in body.items() if k in MATRIX and endpoint in MATRIX[k]}
    for name in REQUIRED[endpoint]:
        if accepted.get(name) in (None, "", []):
            errors.append(f"{name} is required for the {endpoint} endpoint")

    data_ref = _data_ref("data_file", accepted["data_file"], allow_local_paths, errors) \
        if accepted.get("data_file") not in (None, "") else None

    time_column = accepted.get("time_column")
    if time_column is not None and not _is_name(time_column):
        errors.append("time_column must be a column name")
    time_format = accepted.get("time_format", DEFAULT_TIME_FORMAT)
    if not _is_name(time_format):
        errors.append("time_format must be a non-empty string")

    targets = _names("target_columns", accepted["target_columns"], errors) \
        if accepted.get("target_columns") not in (None, "", []) else None
    if targets is not None:
        errors.extend(_target_count_errors(endpoint, targets))

    features: tuple[str, ...] = ()
    if accepted.get("feature_columns") not in (None, "", []):
        features = _names("feature_columns", accepted["feature_columns"], errors) or ()
        overlap = sorted(set(features) & set(targets or ()))
        if overlap:
            errors.append(f"feature_columns overlap target_columns: {', '.join(overlap)}")

    label_column = accepted.get("label_column")
    split_column = accepted.get("train_val_test_column")
    for name, value in (("label_column", label_column), ("train_val_test_column", split_column)):
        if value is not None and not _is_name(value):
            errors.append(f"{name} must be a column name")
        elif value is not None and value in (targets or ()):
            errors.append(f"{name} must not also be a target column")

    prediction_type = accepted.get("prediction_type", "batch")
    if prediction_type not in PREDICTION_TYPES:
        errors.append(f"prediction_type must be one of {', '.join(PREDICTION_TYPES)}")
    recent_ref = None
    if "recent_data" in accepted:
        recent_ref = _data_ref("recent_data", accepted["recent_data"], allow_local_paths, errors)
        if prediction_type != "stream":
            errors.append("recent_data requires prediction_type=stream")
    elif prediction_type == "stream":
        errors.append("prediction_type=stream requires recent_data")

    algorithm_config = accepted.get("algorithm_config") or {}
    if not isinstance(algorithm_config, Mapping):
        errors.append("algorithm_config must be an object")
        algorithm_config = {}
    detector = None
    if endpoint in _UNSUPERVISED:
        estimator = accepted.get("anomaly_estimator", "DNN_AutoEncoder")
        algorithm_type = accepted.get("algorithm_type")
        if estimator not in DEFAULTS:
            errors.append(f"anomaly_estimator {estimator!r} is unknown; valid: {', '.join(DEFAULTS)}")
        else:
            problems = config_violations(algorithm_type, estimator, algorithm_config)
            errors.extend(problems)
            if not problems:
                detector = DetectorConfig(estimator, algorithm_type, algorithm_config)
    else:
        errors.extend(_endpoint_config_errors(endpoint, algorithm_config))

    window_args = {}
    for name in ("lookback_window", "observation_window"):
        if name in accepted:
            if not _is_int(accepted[name]) or accepted[name] < 1:
                errors.append(f"{name} must be a positive integer")
            else:
                window_args[name] = accepted[name]

    method = accepted.get("labeling_method", DEFAULT_METHOD)
    threshold = accepted.get("labeling_threshold", DEFAULT_THRESHOLD)
    errors.extend(labeling_violations(method, threshold))

    metrics = accepted.get("evaluation_metrics", ["f1"])
    if isinstance(metrics, str):
        metrics = [metrics]
    if not isinstance(metrics, list) or not metrics or any(m not in EVALUATION_METRICS for m in metrics):
        errors.append(f"evaluation_metrics must be a non-empty list drawn from {', '.join(EVALUATION_METRICS)}")
        metrics = ["f1"]

    evaluation_time = accepted.get("evaluation_time")
    if evaluation_time is not None and not (_is_number(evaluation_time) and evaluation_time > 0):
        errors.append("evaluation_time must be a positive number of seconds")

    instance_size = accepted.get("instance_size", DEFAULT_INSTANCE_SIZE)
    if instance_size not in SIZE_LABELS:
        errors.append(f"instance_size must be one of {', '.join(SIZE_LABELS)}")

    unsupervised_fs = accepted.get("unsupervised_fs", False)
    if not isinstance(unsupervised_fs, bool):
        errors.append("unsupervised_fs must be true or false")

    split = accepted.get("train_test_split", DEFAULT_TRAIN_TEST_SPLIT)
    if not (_is_number(split) and 0 < split <= 1):
        errors.append("train_test_split must be a number in (0, 1]")
    folds = accepted.get("train_cv_split", DEFAULT_TRAIN_CV_SPLIT)
    if not (_is_int(folds) and folds >= 2):
        errors.append("train_cv_split must be an integer >= 2")

    if errors:
        raise ValidationFailed(errors)

    assert data_ref is not None and targets is not None
    if endpoint == SEMISUPERVISED:
        algorithm_config = {"candidates": list(DEFAULT_CANDIDATES), "seed": DEFAULT_SEED, **algorithm_config}
    elif endpoint == MIXTURE:
        algorithm_config = {"variant": "auto", "seed": DEFAULT_SEED, **algorithm_config}
    elif endpoint == REGRESSION:
        algorithm_config = {"seed": DEFAULT_SEED, **algorithm_config}
    return DetectionRequest(
        endpoint=endpoint,
        data_ref=data_ref,
        roles=ColumnRoles(
            time_column=time_column,
            target_columns=targets,
            time_format=time_format,
            feature_columns=features,
            label_column=label_column,
            split_column=split_column,
        ),
        prediction_type=prediction_type,
        recent_data=recent_ref,
        detector=detector,
        window=WindowSpec(**window_args),
        labeling=LabelingSpec(method, threshold),
        algorithm_config=dict(algorithm_config),
        evaluation_metrics=tuple(metrics),
        evaluation_time=float(evaluation_time) if evaluation_time is not None else None,
        instance_size=instance_size,
        unsupervised_fs=unsupervised_fs,
        train_test_split=float(split),
        train_cv_split=int(folds),
    )

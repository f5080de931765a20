"""Estimator catalogue, compatibility table and hyperparameter defaults."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from detectors.errors import InvalidDetectorConfig

DEFAULT_SEED = 42

ALGORITHM_TYPES = ("ReconstructAD", "PredAD", "RelationshipAD")

COMPATIBILITY: dict[str, tuple[str, ...]] = {
    "ReconstructAD": ("DNN_AutoEncoder",),
    "PredAD": ("WindowedLinear",),
    "RelationshipAD": (
        "Covariance",
        "GMM_L0",
        "GMM_L1",
        "IsolationForest",
        "NearestNeighbor",
        "AnomalyEnsembler",
    ),
}

ESTIMATORS: tuple[str, ...] = tuple(e for group in COMPATIBILITY.values() for e in group)

# members an AnomalyEnsembler may combine
ENSEMBLE_MEMBERS = ("Covariance", "GMM_L0", "GMM_L1", "IsolationForest", "NearestNeighbor")

DEFAULTS: dict[str, dict[str, Any]] = {
    "DNN_AutoEncoder": {
        "hidden_layers": None,
        "epochs": 100,
        "learning_rate": 0.01,
        "batch_size": 32,
        "seed": DEFAULT_SEED,
    },
    "WindowedLinear": {"ridge_lambda": 1e-6, "seed": DEFAULT_SEED},
    "Covariance": {"shrinkage": 0.01, "seed": DEFAULT_SEED},
    "GMM_L0": {
        "max_components": 5,
        "max_iter": 200,
        "tol": 1e-6,
        "reg_covar": 1e-6,
        "seed": DEFAULT_SEED,
    },
    "GMM_L1": {
        "max_components": 5,
        "l1_weight": 0.1,
        "max_iter": 200,
        "tol": 1e-6,
        "reg_covar": 1e-6,
        "seed": DEFAULT_SEED,
    },
    "IsolationForest": {"n_trees": 100, "max_samples": 256, "seed": DEFAULT_SEED},
    "NearestNeighbor": {"k": 5, "seed": DEFAULT_SEED},
    "AnomalyEnsembler": {
        "members": ["IsolationForest", "NearestNeighbor", "Covariance"],
        "seed": DEFAULT_SEED,
    },
}

_POSITIVE_INTS = {"epochs", "batch_size", "k", "n_trees", "max_samples", "max_components", "max_iter"}
_POSITIVE_FLOATS = {"learning_rate", "tol"}
_NONNEG_FLOATS = {"ridge_lambda", "reg_covar", "l1_weight"}


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def algorithm_type_for(estimator: str) -> str | None:
    for algo, group in COMPATIBILITY.items():
        if estimator in group:
            return algo
    return None


def hyperparameter_violations(estimator: str, params: Mapping[str, Any]) -> list[str]:
    """Check *params* against the estimator's documented hyperparameters."""
    if estimator not in DEFAULTS:
        return [f"unknown anomaly_estimator {estimator!r}; valid: {', '.join(ESTIMATORS)}"]
    allowed = DEFAULTS[estimator]
    errors: list[str] = []
    for key, value in params.items():
        if key not in allowed:
            errors.append(f"algorithm_config.{key} not accepted by {estimator}; "
                          f"valid: {', '.join(sorted(allowed))}")
            continue
        if key == "seed":
            if not _is_int(value):
                errors.append("algorithm_config.seed must be an integer")
        elif key in _POSITIVE_INTS:
            if not _is_int(value) or value < 1:
                errors.append(f"algorithm_config.{key} must be a positive integer")
        elif key in _POSITIVE_FLOATS:
            if not _is_number(value) or value <= 0:
                errors.append(f"algorithm_config.{key} must be > 0")
        elif key in _NONNEG_FLOATS:
            if not _is_number(value) or value < 0:
                errors.append(f"algorithm_config.{key} must be >= 0")
        elif key == "shrinkage":
            if not _is_number(value) or not 0 <= value <= 1:
                errors.append("algorithm_config.shrinkage must be in [0, 1]")
        elif key == "hidden_layers":
            if value is not None and (
                not isinstance(value, (list, tuple)) or not value
                or not all(_is_int(v) and v > 0 for v in value)
            ):
                errors.append("algorithm_config.hidden_layers must be a list of positive integers")
        elif key == "members":
            if not isinstance(value, (list, tuple)) or len(value) < 2:
                errors.append("algorithm_config.members must list at least 2 estimators")
            else:
                bad = [m for m in value if m not in ENSEMBLE_MEMBERS]
                if bad:
                    errors.append(f"algorithm_config.members not ensemble-capable: {bad}; "
                                  f"valid: {', '.join(ENSEMBLE_MEMBERS)}")
    return errors


def config_violations(algorithm_type: str | None, estimator: str, params: Mapping[str, Any]) -> list[str]:
    errors: list[str] = []
    if algorithm_type is not None and algorithm_type not in COMPATIBILITY:
        errors.append(f"unknown algorithm_type {algorithm_type!r}; valid: {', '.join(ALGORITHM_TYPES)}")
    elif algorithm_type is not None and estimator in DEFAULTS and estimator not in COMPATIBILITY[algorithm_type]:
        errors.append(f"anomaly_estimator {estimator} is not compatible with {algorithm_type}; "
                      f"valid: {', '.join(COMPATIBILITY[algorithm_type])}")
    errors.extend(hyperparameter_violations(estimator, params))
    return errors


@dataclass(frozen=True)
class DetectorConfig:
    """Estimator choice plus its merged hyperparameters.

    ``algorithm_config`` holds the caller's overrides; :attr:`params` is the
    full set with every default filled in.
    """

    anomaly_estimator: str = "DNN_AutoEncoder"
    algorithm_type: str | None = None
    algorithm_config: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.algorithm_type is None:
            object.__setattr__(self, "algorithm_type", algorithm_type_for(self.anomaly_estimator))
        errors = config_violations(self.algorithm_type, self.anomaly_estimator, self.algorithm_config)
        if errors:
            raise InvalidDetectorConfig(errors)
        object.__setattr__(self, "algorithm_config", dict(self.algorithm_config))

    @property
    def params(self) -> dict[str, Any]:
        merged = dict(DEFAULTS[self.anomaly_estimator])
        merged.update(self.algorithm_config)
        return merged

    @property
    def seed(self) -> int:
        return int(self.params["seed"])

    def with_seed(self, seed: int) -> DetectorConfig:
        return DetectorConfig(self.anomaly_estimator, self.algorithm_type,
                              {**self.algorithm_config, "seed": seed})

    def to_dict(self) -> dict[str, Any]:
        return {
            "algorithm_type": self.algorithm_type,
            "anomaly_estimator": self.anomaly_estimator,
            "algorithm_config": dict(self.algorithm_config),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> DetectorConfig:
        return cls(
            anomaly_estimator=d.get("anomaly_estimator") or "DNN_AutoEncoder",
            algorithm_type=d.get("algorithm_type"),
            algorithm_config=d.get("algorithm_config") or {},
        )

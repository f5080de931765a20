from __future__ import annotations

import pytest

from service.errors import UnknownEndpoint, ValidationFailed
from service.schema import ENDPOINTS, MATRIX, validate_request

CSV = "timestamp,cpu,mem,y,x,a,label,split\n2024-01-01 00:00:00,1,2,3,4,5,1,train\n"

# U = univariate, M = multivariate, S = semisupervised, R = regression, X = mixture
ACCEPTED = """
data_file               U M S R X
time_column             U M S R X
time_format             U M S R X
target_columns          U M S R X
label_column            . . S . .
feature_columns         . . . R .
prediction_type         U M . . .
recent_data             U M . . .
algorithm_config        U M S R X
algorithm_type          U M . . .
anomaly_estimator       U M . . .
lookback_window         U M . . .
observation_window      U M . . .
labeling_method         U M . . .
labeling_threshold      U M . . .
train_val_test_column   . . S . .
evaluation_metrics      U M S R X
evaluation_time         U M S R X
instance_size           U M S R X
unsupervised_fs         U M S R X
train_test_split        . . . R X
train_cv_split          . . . R X
"""

LETTERS = dict(zip("UMSRX", ("univariate", "multivariate", "semisupervised", "regression", "mixture")))


def _expected() -> dict[str, set[str]]:
    table = {}
    for line in ACCEPTED.strip().splitlines():
        name, *marks = line.split()
        table[name] = {LETTERS[m] for m in marks if m != "."}
    return table


BASE = {
    "univariate": {"data_file": CSV, "time_column": "timestamp", "target_columns": ["cpu"]},
    "multivariate": {"data_file": CSV, "time_column": "timestamp", "target_columns": ["cpu", "mem"]},
    "semisupervised": {"data_file": CSV, "time_column": "timestamp", "target_columns": ["a"],
                       "label_column": "label", "train_val_test_column": "split"},
    "regression": {"data_file": CSV, "time_column": "timestamp", "target_columns": ["y"],
                   "feature_columns": ["x"]},
    "mixture": {"data_file": CSV, "time_column": "timestamp", "target_columns": ["cpu"]},
}

# a valid value for every argument; recent_data only makes sense with stream
VALUES = {
    "data_file": {"data_file": CSV},
    "time_column": {"time_column": "timestamp"},
    "time_format": {"time_format": "%Y-%m-%d %H:%M:%S"},
    "target_columns": {},
    "label_column": {"label_column": "label"},
    "feature_columns": {"feature_columns": ["x"]},
    "prediction_type": {"prediction_type": "batch"},
    "recent_data": {"recent_data": CSV, "prediction_type": "stream"},
    "algorithm_config": {"algorithm_config": {"seed": 7}},
    "algorithm_type": {"algorithm_type": "ReconstructAD"},
    "anomaly_estimator": {"anomaly_estimator": "Covariance"},
    "lookback_window": {"lookback_window": 5},
    "observation_window": {"observation_window": 3},
    "labeling_method": {"labeling_method": "std_multiple"},
    "labeling_threshold": {"labeling_threshold": 0.05},
    "train_val_test_column": {"train_val_test_column": "split"},
    "evaluation_metrics": {"evaluation_metrics": ["f1", "recall"]},
    "evaluation_time": {"evaluation_time": 60},
    "instance_size": {"instance_size": "S"},
    "unsupervised_fs": {"unsupervised_fs": True},
    "train_test_split": {"train_test_split": 0.7},
    "train_cv_split": {"train_cv_split": 3},
}


def test_matrix_matches_the_argument_table() -> None:
    expected = _expected()
    assert set(MATRIX) == set(expected)
    assert len(MATRIX) == 22
    for name, endpoints in expected.items():
        assert set(MATRIX[name]) == endpoints, name


@pytest.mark.parametrize("endpoint", ENDPOINTS)
@pytest.mark.parametrize("argument", list(VALUES))
def test_every_argument_endpoint_pair(endpoint: str, argument: str) -> None:
    body = {**BASE[endpoint], **VALUES[argument]}
    if argument == "target_columns":
        return
    if endpoint in _expected()[argument]:
        req = validate_request(endpoint, body)
        assert req.endpoint == endpoint
    else:
        with pytest.raises(ValidationFailed) as exc:
            validate_request(endpoint, body)
        assert f"{argument} not accepted by the {endpoint} endpoint" in exc.value.violations


@pytest.mark.parametrize("endpoint", ENDPOINTS)
def test_minimal_bodies_validate_with_defaults(endpoint: str) -> None:
    req = validate_request(endpoint, BASE[endpoint])
    assert req.instance_size == "M"
    assert req.roles.time_format == "%Y-%m-%d %H:%M:%S"
    assert req.evaluation_metrics == ("f1",)
    assert req.seed == 42


def test_unsupervised_defaults() -> None:
    req = validate_request("univariate", BASE["univariate"])
    assert req.prediction_type == "batch"
    assert req.detector.anomaly_estimator == "DNN_AutoEncoder"
    assert req.detector.algorithm_type == "ReconstructAD"
    assert req.labeling.labeling_method == "pvalue_threshold"
    assert req.labeling.labeling_threshold == 0.01
    assert (req.window.lookback_window, req.window.observation_window) == (10, 10)


def test_all_violations_reported_together() -> None:
    body = {**BASE["multivariate"], "label_column": "label", "prediction_type": "stream", "colour": "red"}
    del body["time_column"]
    with pytest.raises(ValidationFailed) as exc:
        validate_request("multivariate", body)
    violations = exc.value.violations
    assert "label_column not accepted by the multivariate endpoint" in violations
    assert "colour is not a known argument" in violations
    assert "time_column is required for the multivariate endpoint" in violations
    assert "prediction_type=stream requires recent_data" in violations


def test_target_counts_per_endpoint() -> None:
    with pytest.raises(ValidationFailed):
        validate_request("univariate", {**BASE["univariate"], "target_columns": ["cpu", "mem"]})
    with pytest.raises(ValidationFailed):
        validate_request("multivariate", {**BASE["multivariate"], "target_columns": ["cpu"]})


def test_singular_target_column_alias() -> None:
    body = {**BASE["univariate"]}
    body["target_column"] = body.pop("target_columns")
    assert validate_request("univariate", body).roles.target_columns == ("cpu",)


def test_estimator_and_type_must_agree() -> None:
    body = {**BASE["univariate"], "algorithm_type": "PredAD", "anomaly_estimator": "Covariance"}
    with pytest.raises(ValidationFailed) as exc:
        validate_request("univariate", body)
    assert any("not compatible with PredAD" in v for v in exc.value.violations)


def test_unknown_endpoint() -> None:
    with pytest.raises(UnknownEndpoint):
        validate_request("bivariate", BASE["univariate"])


def test_object_locator_and_local_paths() -> None:
    body = {**BASE["univariate"], "data_file": {"bucket": "metrics", "key": "cpu.csv", "credentials": "ops"}}
    req = validate_request("univariate", body)
    assert req.data_ref.kind == "object"
    assert req.data_ref.to_dict() == {"bucket": "metrics", "key": "cpu.csv", "credentials": "ops"}
    with pytest.raises(ValidationFailed):
        validate_request("univariate", {**BASE["univariate"], "data_file": {"path": "/tmp/x.csv"}})
    local = validate_request("univariate", {**BASE["univariate"], "data_file": {"path": "/tmp/x.csv"}},
                             allow_local_paths=True)
    assert local.data_ref.path == "/tmp/x.csv"


def test_endpoint_specific_algorithm_config() -> None:
    with pytest.raises(ValidationFailed) as exc:
        validate_request("mixture", {**BASE["mixture"], "algorithm_config": {"variant": "L2"}})
    assert any("variant" in v for v in exc.value.violations)
    with pytest.raises(ValidationFailed):
        validate_request("semisupervised", {**BASE["semisupervised"],
                                            "algorithm_config": {"candidates": ["WindowedLinear"]}})
    req = validate_request("mixture", BASE["mixture"])
    assert req.algorithm_config == {"variant": "auto", "seed": 42}


def test_normalized_body_revalidates() -> None:
    req = validate_request("multivariate", {**BASE["multivariate"], "anomaly_estimator": "IsolationForest"})
    body = req.to_dict()
    endpoint = body.pop("endpoint")
    body["data_file"] = CSV
    body.pop("evaluation_time")
    again = validate_request(endpoint, body)
    assert again.to_dict() == req.to_dict()

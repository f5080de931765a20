from __future__ import annotations

import numpy as np
import pytest

from evaluation.benchmark import BenchmarkSpec, format_benchmark, rows_to_csv, run_benchmark
from evaluation.errors import (
    BenchmarkError,
    EvaluationError,
    LengthMismatch,
    MissingAssetFiles,
    NoAnomaliesInTruth,
)
from evaluation.metrics import (
    best_f1_threshold_sweep,
    point_adjust,
    prf1,
    threshold_labels,
    truth_segments,
)
from evaluation.synthetic import generate_series, write_mini_dataset


def _oracle_adjust(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    out = pred.copy()
    i = 0
    while i < len(truth):
        if truth[i] != -1:
            i += 1
            continue
        j = i
        while j < len(truth) and truth[j] == -1:
            j += 1
        if any(pred[k] == -1 for k in range(i, j)):
            out[i:j] = -1
        i = j
    return out


def _random_labels(rng: np.random.Generator, n: int, rate: float) -> np.ndarray:
    return np.where(rng.random(n) < rate, -1, 1).astype(np.int8)


def test_point_adjust_matches_brute_force() -> None:
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        truth = _random_labels(rng, n, rng.random())
        pred = _random_labels(rng, n, rng.random())
        np.testing.assert_array_equal(point_adjust(pred, truth), _oracle_adjust(pred, truth))


def test_point_adjust_example() -> None:
    truth = np.array([1, -1, -1, -1, 1, -1, -1])
    pred = np.array([1, 1, -1, 1, -1, 1, 1])
    assert point_adjust(pred, truth).tolist() == [1, -1, -1, -1, -1, 1, 1]
    result = prf1(point_adjust(pred, truth), truth)
    assert (result.tp, result.fp, result.fn) == (3, 1, 2)
    assert result.precision == 0.75
    assert result.recall == 0.6


def test_truth_segments_are_half_open() -> None:
    assert truth_segments(np.array([-1, -1, 1, -1, 1, 1, -1])) == [(0, 2), (3, 4), (6, 7)]


def test_metrics_reject_length_mismatch() -> None:
    with pytest.raises(LengthMismatch):
        prf1(np.ones(3), np.ones(4))


def _brute_best_f1(raw: np.ndarray, truth: np.ndarray, adjust: bool) -> float:
    best = 0.0
    for threshold in np.unique(raw[~np.isnan(raw)]):
        pred = threshold_labels(raw, threshold)
        if adjust:
            pred = point_adjust(pred, truth)
        best = max(best, prf1(pred, truth).f1)
    return best


@pytest.mark.parametrize("adjust", [True, False])
def test_threshold_sweep_finds_the_best_cut(adjust: bool) -> None:
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(5, 60))
        truth = _random_labels(rng, n, 0.2)
        if not np.any(truth == -1):
            truth[0] = -1
        raw = np.round(rng.random(n) * 5, 1)
        raw[rng.random(n) < 0.1] = np.nan
        threshold, result = best_f1_threshold_sweep(raw, truth, adjust=adjust)
        assert result.f1 == pytest.approx(_brute_best_f1(raw, truth, adjust), abs=1e-12)
        pred = threshold_labels(raw, threshold)
        if adjust:
            pred = point_adjust(pred, truth)
        assert prf1(pred, truth).f1 == pytest.approx(result.f1, abs=1e-12)


def test_threshold_sweep_prefers_higher_threshold_on_ties() -> None:
    truth = np.array([1, -1, 1, 1])
    raw = np.array([0.1, 0.9, 0.5, 0.2])
    threshold, result = best_f1_threshold_sweep(raw, truth)
    assert result.f1 == 1.0
    assert 0.5 < threshold <= 0.9


def test_threshold_sweep_needs_anomalies() -> None:
    with pytest.raises(NoAnomaliesInTruth):
        best_f1_threshold_sweep(np.arange(4.0), np.ones(4))


def test_synthetic_series_is_seeded() -> None:
    first = generate_series(seed=3, n_rows=500)
    second = generate_series(seed=3, n_rows=500)
    np.testing.assert_array_equal(first.values, second.values)
    np.testing.assert_array_equal(first.truth, second.truth)
    assert int(np.sum(first.truth == -1)) == 5
    assert first.columns == [f"metric_{j}" for j in range(5)]
    assert not np.array_equal(generate_series(seed=4, n_rows=500).values, first.values)


def test_benchmark_on_synthetic_assets(tmp_path) -> None:
    write_mini_dataset(tmp_path, assets=2)
    spec = BenchmarkSpec(tmp_path, estimators=("Covariance", "NearestNeighbor"),
                         evaluation_metrics=("f1", "precision", "recall"))
    rows = run_benchmark(spec)
    assert [(r.estimator, r.dataset) for r in rows] == [("Covariance", "synthetic"),
                                                         ("NearestNeighbor", "synthetic")]
    assert all(r.assets_evaluated == 2 and r.assets_skipped == 0 for r in rows)
    assert rows[0].f1 >= 0.9
    assert sorted(rows[0].per_asset) == ["asset-1", "asset-2"]
    text = format_benchmark(rows, spec.evaluation_metrics)
    assert "Covariance" in text
    assert "Published comparison lines" not in text


def test_benchmark_is_deterministic_across_job_counts(tmp_path) -> None:
    write_mini_dataset(tmp_path, assets=3)
    serial = run_benchmark(BenchmarkSpec(tmp_path, estimators=("IsolationForest",), jobs=1))
    parallel = run_benchmark(BenchmarkSpec(tmp_path, estimators=("IsolationForest",), jobs=3))
    assert rows_to_csv(serial) == rows_to_csv(parallel)
    assert rows_to_csv(serial).splitlines()[0] == \
        "estimator,dataset,f1,precision,recall,assets_evaluated,assets_skipped"


def test_windowed_estimator_scores_every_test_row(tmp_path) -> None:
    write_mini_dataset(tmp_path, assets=1)
    rows = run_benchmark(BenchmarkSpec(tmp_path, estimators=("WindowedLinear",), lookback_window=5))
    assert rows[0].assets_evaluated == 1


def test_missing_asset_files_are_listed(tmp_path) -> None:
    dataset = write_mini_dataset(tmp_path, assets=2)
    (dataset / "asset-2" / "labels.csv").unlink()
    with pytest.raises(MissingAssetFiles) as exc:
        run_benchmark(BenchmarkSpec(tmp_path, estimators=("Covariance",)))
    assert exc.value.missing == [str(dataset / "asset-2" / "labels.csv")]


def test_bad_asset_is_skipped_not_fatal(tmp_path) -> None:
    dataset = write_mini_dataset(tmp_path, assets=2)
    (dataset / "asset-1" / "labels.csv").write_text("label\n0\n1\n")
    rows = run_benchmark(BenchmarkSpec(tmp_path, estimators=("Covariance",)))
    assert rows[0].assets_evaluated == 1
    assert rows[0].assets_skipped == 1
    assert "asset-1" in rows[0].skipped


@pytest.mark.parametrize("kwargs", [
    {"estimators": ("RandomForest",)},
    {"estimators": ()},
    {"evaluation_metrics": ("auc",)},
    {"evaluation_time": 0},
])
def test_benchmark_spec_validation(tmp_path, kwargs) -> None:
    with pytest.raises(BenchmarkError):
        BenchmarkSpec(tmp_path, **kwargs)


def test_evaluation_errors_share_a_base() -> None:
    err = MissingAssetFiles(["a/train.csv", "b/labels.csv"])
    assert isinstance(err, BenchmarkError)
    assert isinstance(err, EvaluationError)
    assert isinstance(NoAnomaliesInTruth("x"), EvaluationError)
    assert err.to_dict() == {"code": "missing_asset_files",
                             "message": "missing benchmark files: a/train.csv, b/labels.csv",
                             "details": {"missing": ["a/train.csv", "b/labels.csv"]}}

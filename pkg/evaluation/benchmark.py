"""Per-asset benchmark protocol and per-dataset aggregation.

Layout: ``<root>/<dataset>/<asset>/{train.csv,test.csv,labels.csv}``. Train
and test hold numeric columns (an optional ``timestamp`` column is ignored
for modelling); labels.csv has one ``label`` column with 1 for anomalous test
rows and 0 otherwise. Each asset gets its own model: z-score on train, fit on
train, score test, best point-adjusted F1 over all thresholds. A dataset's
score is the unweighted mean over the assets that completed.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from detectors.config import ESTIMATORS, DetectorConfig
from detectors.registry import ESTIMATORS as FITTERS
from detectors.registry import fit_model, score_model
from evaluation.errors import BenchmarkError, BudgetExceeded, MissingAssetFiles
from evaluation.metrics import EvalResult, best_f1_threshold_sweep
from tsdata.csvio import parse_numeric_csv, read_table
from tsdata.frame import MetricFrame, WindowSpec
from tsdata.transforms import apply_norm, zscore_normalize
from utils.concurrent import run_concurrent
from utils.deadline import Deadline, JobExpired, deadline_scope
from utils.display import format_table
from utils.errors import AnomalyServiceError

ASSET_FILES = ("train.csv", "test.csv", "labels.csv")
METRICS = ("f1", "precision", "recall")
CSV_COLUMNS = ("estimator", "dataset", "f1", "precision", "recall", "assets_evaluated", "assets_skipped")
TIME_COLUMN = "timestamp"

# Average F1 reported for the deployed suite (SMD / SMAP / MSL); None = not reported.
PUBLISHED_F1: dict[str, dict[str, float | None]] = {
    "DAEMON": {"SMD": 0.963, "SMAP": 0.91, "MSL": 0.953},
    "DNN_AutoEncoder": {"SMD": 0.862, "SMAP": 0.647, "MSL": 0.829},
    "CNN_AutoEncoder": {"SMD": 0.582, "SMAP": 0.596, "MSL": 0.610},
    "Seq2seq_AutoEncoder": {"SMD": 0.682, "SMAP": 0.604, "MSL": 0.612},
    "DNN_VarAutoEncoder": {"SMD": 0.765, "SMAP": 0.669, "MSL": 0.708},
    "IsolationForest": {"SMD": 0.865, "SMAP": 0.715, "MSL": 0.809},
    "AnomalyEnsembler": {"SMD": 0.876, "SMAP": 0.715, "MSL": 0.817},
    "NSA": {"SMD": 0.559, "SMAP": 0.675, "MSL": 0.651},
    "NearestNeighbor": {"SMD": 0.812, "SMAP": 0.713, "MSL": 0.650},
    "PredAD": {"SMD": 0.903, "SMAP": 0.851, "MSL": 0.934},
    "DeepAD": {"SMD": 0.936, "SMAP": 0.970, "MSL": 0.934},
    "GMM_L1": {"SMD": 0.947, "SMAP": None, "MSL": 0.957},
    "GMM_L0": {"SMD": 0.956, "SMAP": 0.985, "MSL": 0.956},
    "Covariance": {"SMD": 0.741, "SMAP": 0.589, "MSL": 0.682},
    "MachineTranslation": {"SMD": 0.946, "SMAP": 0.884, "MSL": 0.868},
}


def spec_violations(estimators: Sequence[str], metrics: Sequence[str], budget: float) -> list[str]:
    errors = []
    unknown = [e for e in estimators if e not in ESTIMATORS]
    if unknown:
        errors.append(f"unknown estimators {unknown}; valid: {', '.join(ESTIMATORS)}")
    if not estimators:
        errors.append("no estimators given")
    bad = [m for m in metrics if m not in METRICS]
    if bad or not metrics:
        errors.append(f"evaluation_metrics must be a non-empty subset of {', '.join(METRICS)}")
    if not budget > 0:
        errors.append("evaluation_time must be > 0")
    return errors


@dataclass(frozen=True)
class BenchmarkSpec:
    root: Path
    estimators: tuple[str, ...] = ESTIMATORS
    datasets: tuple[str, ...] | None = None
    assets: tuple[str, ...] | None = None
    evaluation_metrics: tuple[str, ...] = ("f1",)
    evaluation_time: float = 3600.0
    seed: int = 42
    lookback_window: int = 10
    jobs: int = 1

    def __post_init__(self) -> None:
        errors = spec_violations(self.estimators, self.evaluation_metrics, self.evaluation_time)
        if errors:
            raise BenchmarkError("; ".join(errors), violations=errors)


@dataclass(frozen=True)
class BenchmarkRow:
    estimator: str
    dataset: str
    f1: float
    precision: float
    recall: float
    assets_evaluated: int
    assets_skipped: int
    per_asset: dict[str, EvalResult] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)

    def csv_record(self) -> list[str]:
        return [self.estimator, self.dataset, _num(self.f1), _num(self.precision), _num(self.recall),
                str(self.assets_evaluated), str(self.assets_skipped)]


def _num(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def discover_assets(spec: BenchmarkSpec) -> dict[str, list[Path]]:
    root = Path(spec.root)
    if not root.is_dir():
        raise MissingAssetFiles([str(root)])
    datasets = spec.datasets or tuple(sorted(p.name for p in root.iterdir() if p.is_dir()))
    found: dict[str, list[Path]] = {}
    missing: list[str] = []
    for name in datasets:
        ds = root / name
        if not ds.is_dir():
            missing.append(str(ds))
            continue
        assets = spec.assets or tuple(sorted(p.name for p in ds.iterdir() if p.is_dir()))
        found[name] = []
        for asset in assets:
            asset_dir = ds / asset
            absent = [str(asset_dir / f) for f in ASSET_FILES if not (asset_dir / f).is_file()]
            missing.extend(absent)
            if not absent:
                found[name].append(asset_dir)
    if missing:
        raise MissingAssetFiles(missing)
    return found


def load_truth(path: Path) -> np.ndarray:
    table = read_table(path.read_bytes())
    column = "label" if "label" in table.columns else table.columns[0]
    values = pd.to_numeric(table[column].astype(str).str.strip(), errors="coerce").to_numpy()
    if np.any(np.isnan(values)):
        raise BenchmarkError(f"{path}: labels must be numeric 0/1")
    return np.where(values > 0, -1, 1).astype(np.int8)


def load_asset(asset_dir: Path) -> tuple[MetricFrame, MetricFrame, np.ndarray]:
    train = parse_numeric_csv(io.BytesIO((asset_dir / "train.csv").read_bytes()), TIME_COLUMN)
    test = parse_numeric_csv(io.BytesIO((asset_dir / "test.csv").read_bytes()), TIME_COLUMN)
    truth = load_truth(asset_dir / "labels.csv")
    if len(truth) != len(test):
        raise BenchmarkError(f"{asset_dir}: {len(truth)} labels for {len(test)} test rows")
    if train.names != test.names:
        raise BenchmarkError(f"{asset_dir}: train and test columns differ")
    return train, test, truth


def evaluate_asset(asset_dir: Path, estimator: str, spec: BenchmarkSpec) -> EvalResult:
    """Fit on train, score test, return the best point-adjusted result."""
    train, test, truth = load_asset(asset_dir)
    label = f"{asset_dir.parent.name}/{asset_dir.name}"
    started = time.monotonic()
    try:
        with deadline_scope(Deadline(spec.evaluation_time)):
            train_n, norm = zscore_normalize(train)
            test_n = apply_norm(test, norm)
            cfg = DetectorConfig(estimator, algorithm_config={"seed": spec.seed})
            window = WindowSpec(lookback_window=spec.lookback_window)
            model = fit_model(train_n, cfg, window)
            if FITTERS[estimator].windowed:
                # prefix the tail of train so every test row has a full window
                lookback = model.lookback
                joined = np.vstack([train_n.values()[-lookback:], test_n.values()])
                frame = MetricFrame(timestamps=np.arange(joined.shape[0]),
                                    columns={n: joined[:, j] for j, n in enumerate(train_n.names)})
                scores = score_model(model, frame).values[lookback:]
            else:
                scores = score_model(model, test_n).values
    except JobExpired:
        raise BudgetExceeded(label, time.monotonic() - started, spec.evaluation_time) from None
    elapsed = time.monotonic() - started
    if elapsed > spec.evaluation_time:
        raise BudgetExceeded(label, elapsed, spec.evaluation_time)
    threshold, result = best_f1_threshold_sweep(scores, truth)
    logger.debug(f"{estimator} {label}: f1 {result.f1:.4f} at {threshold:.6g} ({elapsed:.1f}s)")
    return result


@dataclass(frozen=True)
class _Outcome:
    asset: str
    result: EvalResult | None = None
    error: str = ""


def _run_one(item: tuple[Path, str, BenchmarkSpec]) -> _Outcome:
    asset_dir, estimator, spec = item
    try:
        return _Outcome(asset_dir.name, result=evaluate_asset(asset_dir, estimator, spec))
    except AnomalyServiceError as e:
        return _Outcome(asset_dir.name, error=f"{e.code}: {e.message}")


def aggregate(estimator: str, dataset: str, outcomes: Sequence[_Outcome]) -> BenchmarkRow:
    ordered = sorted(outcomes, key=lambda o: o.asset)
    done = {o.asset: o.result for o in ordered if o.result is not None}
    skipped = {o.asset: o.error for o in ordered if o.result is None}
    for asset, reason in skipped.items():
        logger.warning(f"{estimator} {dataset}/{asset} skipped: {reason}")
    if done:
        f1 = float(np.mean([r.f1 for r in done.values()]))
        precision = float(np.mean([r.precision for r in done.values()]))
        recall = float(np.mean([r.recall for r in done.values()]))
    else:
        f1 = precision = recall = float("nan")
    return BenchmarkRow(estimator, dataset, f1, precision, recall, len(done), len(skipped),
                        per_asset=done, skipped=skipped)


def run_benchmark(spec: BenchmarkSpec) -> list[BenchmarkRow]:
    layout = discover_assets(spec)
    rows: list[BenchmarkRow] = []
    for estimator in spec.estimators:
        for dataset, assets in layout.items():
            logger.info(f"benchmarking {estimator} on {dataset} ({len(assets)} assets)")
            items = [(a, estimator, spec) for a in assets]
            results = run_concurrent(items, _run_one, max_workers=spec.jobs)
            outcomes = [
                r if r is not None else _Outcome(items[i][0].name, error="unexpected failure")
                for i, r in enumerate(results)
            ]
            rows.append(aggregate(estimator, dataset, outcomes))
    return rows


def rows_to_csv(rows: Sequence[BenchmarkRow]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(",".join(r.csv_record()) for r in rows)
    return "\n".join(lines) + "\n"


def published_rows(datasets: Sequence[str]) -> list[list[Any]]:
    out = []
    for estimator, values in PUBLISHED_F1.items():
        for dataset in datasets:
            if dataset in values:
                out.append([f"{estimator} (published)", dataset, values[dataset]])
    return out


def format_benchmark(rows: Sequence[BenchmarkRow], metrics: Sequence[str] = ("f1",),
                     with_published: bool = True) -> str:
    headers = ["estimator", "dataset", *metrics, "assets_evaluated", "assets_skipped"]
    body: list[list[Any]] = [
        [r.estimator, r.dataset, *[getattr(r, m) for m in metrics], r.assets_evaluated, r.assets_skipped]
        for r in rows
    ]
    text = format_table(headers, body, title="Benchmark results (average over assets)")
    if with_published:
        reference = published_rows(sorted({r.dataset for r in rows}))
        if reference:
            text += "\n" + format_table(["estimator", "dataset", "f1"], reference,
                                        title="Published comparison lines")
    return text

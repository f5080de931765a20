"""Seeded synthetic multivariate series with injected point anomalies.

Columns are noisy linear mixes of a 2-dimensional AR(1) latent process, so
they are correlated the way co-located infrastructure metrics are. Anomalies
are isolated rows where one to three columns jump by a fixed multiple of that
column's standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

LATENT_DIM = 2
AR_COEF = 0.5
NOISE_SCALE = 0.1
SPIKE_SIGMA = 8.0
MIN_GAP = 15
WARMUP = 20
START_MS = 1_704_067_200_000  # 2024-01-01T00:00:00Z
STEP_MS = 60_000


@dataclass(frozen=True)
class SyntheticSeries:
    values: np.ndarray
    truth: np.ndarray  # +1 normal, -1 injected
    columns: list[str]

    @property
    def timestamps(self) -> np.ndarray:
        return START_MS + STEP_MS * np.arange(self.values.shape[0], dtype=np.int64)

    def to_frame(self, with_timestamp: bool = True) -> pd.DataFrame:
        data: dict[str, np.ndarray] = {}
        if with_timestamp:
            data["timestamp"] = self.timestamps
        for j, name in enumerate(self.columns):
            data[name] = self.values[:, j]
        return pd.DataFrame(data)


def clean_values(rng: np.random.Generator, n_rows: int, n_columns: int) -> np.ndarray:
    shocks = rng.standard_normal((n_rows + WARMUP, LATENT_DIM))
    latent = np.zeros_like(shocks)
    for t in range(1, shocks.shape[0]):
        latent[t] = AR_COEF * latent[t - 1] + shocks[t]
    mixing = rng.normal(size=(LATENT_DIM, n_columns))
    return latent[WARMUP:] @ mixing + NOISE_SCALE * rng.standard_normal((n_rows, n_columns))


def inject_spikes(values: np.ndarray, rng: np.random.Generator, rate: float = 0.01,
                  sigma: float = SPIKE_SIGMA, std: np.ndarray | None = None) -> np.ndarray:
    """Add spikes in place at ``rate`` of the rows, at least MIN_GAP rows apart.

    Returns the truth labels (+1 normal, -1 spiked).
    """
    n_rows, n_columns = values.shape
    std = values.std(axis=0) if std is None else std
    slots = np.arange(WARMUP, n_rows, MIN_GAP)
    count = min(max(1, int(round(rate * n_rows))), slots.size)
    rows = np.sort(rng.choice(slots, size=count, replace=False))
    for row in rows:
        hit = rng.choice(n_columns, size=int(rng.integers(1, min(3, n_columns) + 1)), replace=False)
        values[row, hit] += rng.choice((-1.0, 1.0), size=hit.size) * sigma * std[hit]
    truth = np.ones(n_rows, dtype=np.int8)
    truth[rows] = -1
    return truth


def generate_series(seed: int, n_rows: int = 2000, n_columns: int = 5,
                    anomaly_rate: float = 0.01, spike_sigma: float = SPIKE_SIGMA,
                    inject: bool = True) -> SyntheticSeries:
    rng = np.random.default_rng(seed)
    values = clean_values(rng, n_rows, n_columns)
    if inject:
        truth = inject_spikes(values, rng, anomaly_rate, spike_sigma)
    else:
        truth = np.ones(n_rows, dtype=np.int8)
    return SyntheticSeries(values=values, truth=truth, columns=[f"metric_{j}" for j in range(n_columns)])


def write_asset(asset_dir: Path, seed: int, n_train: int = 1000, n_test: int = 1000,
                n_columns: int = 5) -> None:
    """Write train.csv (clean), test.csv (spiked) and labels.csv (1 = anomaly)."""
    asset_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    values = clean_values(rng, n_train + n_test, n_columns)
    train, test = values[:n_train], values[n_train:].copy()
    truth = inject_spikes(test, rng, std=train.std(axis=0))
    columns = [f"metric_{j}" for j in range(n_columns)]
    pd.DataFrame(train, columns=columns).to_csv(asset_dir / "train.csv", index=False, float_format="%.10g")
    pd.DataFrame(test, columns=columns).to_csv(asset_dir / "test.csv", index=False, float_format="%.10g")
    pd.DataFrame({"label": np.where(truth == -1, 1, 0)}).to_csv(asset_dir / "labels.csv", index=False)


def write_mini_dataset(root: Path, name: str = "synthetic", assets: int = 3, seed: int = 42) -> Path:
    """Materialize ``<root>/<name>/asset-<i>/`` benchmark folders."""
    dataset = root / name
    for i in range(assets):
        write_asset(dataset / f"asset-{i + 1}", seed=seed + i)
    logger.info(f"wrote {assets} synthetic assets under {dataset}")
    return dataset

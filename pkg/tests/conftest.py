"""Shared fixtures: small seeded series, CSV builders and a quiet logger."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import pandas as pd
import pytest
from loguru import logger

from tsdata.frame import MetricFrame

START_MS = 1_704_067_200_000  # 2024-01-01 00:00:00 UTC
STEP_MS = 60_000
SPIKE_ROW = 120


@pytest.fixture(autouse=True)
def _quiet_logs() -> None:
    logger.remove()
    logger.add(lambda _: None, level="DEBUG")


def stamps(n: int) -> pd.Series:
    ms = START_MS + STEP_MS * np.arange(n, dtype=np.int64)
    return pd.Series(pd.to_datetime(ms, unit="ms", utc=True).strftime("%Y-%m-%d %H:%M:%S"))


@pytest.fixture
def make_frame() -> Callable[..., MetricFrame]:
    def _make(values: np.ndarray, names: Sequence[str] | None = None, **extra) -> MetricFrame:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        names = list(names or [f"m{j}" for j in range(values.shape[1])])
        ts = START_MS + STEP_MS * np.arange(values.shape[0], dtype=np.int64)
        return MetricFrame(timestamps=ts, columns={n: values[:, j] for j, n in enumerate(names)}, **extra)
    return _make


@pytest.fixture
def to_csv() -> Callable[..., str]:
    """Build CSV text with a formatted ``timestamp`` column followed by *columns*."""
    def _csv(columns: dict[str, Sequence], time_column: str = "timestamp") -> str:
        n = len(next(iter(columns.values())))
        table = pd.DataFrame({time_column: stamps(n), **{k: list(v) for k, v in columns.items()}})
        return table.to_csv(index=False, lineterminator="\n")
    return _csv


@pytest.fixture
def spike_csv(to_csv) -> str:
    """200 rows of N(50, 1) noise with a +20 jump at SPIKE_ROW."""
    rng = np.random.default_rng(7)
    cpu = 50.0 + rng.standard_normal(200)
    cpu[SPIKE_ROW] += 20.0
    return to_csv({"cpu": np.round(cpu, 6)})


@pytest.fixture
def multi_csv(to_csv) -> str:
    """Three correlated metrics, 300 rows, with a mem-only jump at SPIKE_ROW."""
    rng = np.random.default_rng(11)
    base = rng.standard_normal(300)
    cpu = 40 + 5 * base + 0.5 * rng.standard_normal(300)
    mem = 60 + 3 * base + 0.5 * rng.standard_normal(300)
    disk = 20 + rng.standard_normal(300)
    mem[SPIKE_ROW] += 25.0
    return to_csv({"cpu": np.round(cpu, 6), "mem": np.round(mem, 6), "disk": np.round(disk, 6)})


@pytest.fixture
def labeled_csv(to_csv) -> str:
    """400 rows: train (normal only), val and test, each with injected failures outside train."""
    rng = np.random.default_rng(3)
    n = 400
    values = rng.standard_normal((n, 3))
    label = np.ones(n, dtype=int)
    split = np.array(["train"] * 240 + ["val"] * 80 + ["test"] * 80, dtype=object)
    for row in (250, 270, 290, 330, 350, 370, 390):
        values[row] += 8.0
        label[row] = -1
    return to_csv({
        "a": np.round(values[:, 0], 6),
        "b": np.round(values[:, 1], 6),
        "c": np.round(values[:, 2], 6),
        "label": label,
        "split": split,
    })

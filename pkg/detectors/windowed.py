"""PredAD / WindowedLinear: ridge forecaster from a flattened lookback window.

Each window of ``lookback`` rows predicts the next row. The raw score is the
norm of the forecast residual, measured in the metric of the shrunk training
residual covariance. The first ``lookback`` rows have no full window and stay
unscored (NaN).

A row whose residual exceeds the training cutoff (median plus ``OUTLIER_MADS``
scaled MADs of the training scores) is replaced by its own forecast in the
windows of the rows after it, so one outlier does not raise the scores of the
``lookback`` rows that follow.
"""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np
import scipy.linalg
from loguru import logger
from scipy.stats import median_abs_deviation
from sklearn.covariance import empirical_covariance

from detectors.errors import SingularSystem
from tsdata.transforms import EPS, window_values

NAME = "WindowedLinear"
RETRY_FACTOR = 10.0
RESIDUAL_SHRINKAGE = 0.01
OUTLIER_MADS = 4.0


def solve_ridge(x: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Solve (XᵀX + λI) W = XᵀY; on failure retry once with 10λ."""
    gram = x.T @ x
    rhs = x.T @ y
    eye = np.eye(gram.shape[0])
    for attempt, penalty in enumerate((lam, lam * RETRY_FACTOR)):
        try:
            with np.errstate(all="raise"):
                coef = scipy.linalg.solve(gram + penalty * eye, rhs, assume_a="pos")
            if np.all(np.isfinite(coef)):
                return coef
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, FloatingPointError):
            pass
        if attempt == 0:
            logger.warning(f"ridge system singular at lambda={penalty:g}, retrying with {penalty * RETRY_FACTOR:g}")
    raise SingularSystem(f"ridge system singular at lambda={lam * RETRY_FACTOR:g}")


def residual_chol(residuals: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Cholesky factor of (1 - a) * R + a * diag(var(values)), R the residual covariance."""
    cov = empirical_covariance(residuals, assume_centered=True)
    target = np.diag(np.maximum(values.var(axis=0), EPS))
    shrunk = (1.0 - RESIDUAL_SHRINKAGE) * cov + RESIDUAL_SHRINKAGE * target
    try:
        return scipy.linalg.cholesky(shrunk, lower=True)
    except scipy.linalg.LinAlgError:
        raise SingularSystem("residual covariance not positive definite") from None


def outlier_cutoff(scores: np.ndarray) -> float:
    finite = scores[np.isfinite(scores)]
    return float(np.median(finite) + OUTLIER_MADS * median_abs_deviation(finite, scale="normal"))


def forecast(params: Mapping[str, Any], flat_windows: np.ndarray) -> np.ndarray:
    return (flat_windows - params["x_mean"]) @ params["coef"] + params["y_mean"]


def residual_norm(params: Mapping[str, Any], residuals: np.ndarray) -> np.ndarray:
    sol = scipy.linalg.solve_triangular(params["resid_chol"], np.atleast_2d(residuals).T, lower=True)
    return np.sqrt(np.sum(sol * sol, axis=0))


def fit_arrays(values: np.ndarray, hp: Mapping[str, Any], lookback: int) -> tuple[dict[str, Any], np.ndarray]:
    windows = window_values(values, lookback)
    x = windows.flat()
    y = windows.targets
    x_mean = x.mean(axis=0)
    y_mean = y.mean(axis=0)
    coef = solve_ridge(x - x_mean, y - y_mean, float(hp["ridge_lambda"]))
    params: dict[str, Any] = {"coef": coef, "x_mean": x_mean, "y_mean": y_mean, "lookback": lookback}
    residuals = y - forecast(params, x)
    params["resid_chol"] = residual_chol(residuals, values)
    params["cutoff"] = outlier_cutoff(residual_norm(params, residuals))
    return params, score_arrays(params, values)


def score_arrays(params: Mapping[str, Any], values: np.ndarray) -> np.ndarray:
    lookback = int(params["lookback"])
    scores = np.full(values.shape[0], np.nan)
    if values.shape[0] <= lookback:
        return scores
    windows = window_values(values, lookback)
    scores[windows.target_rows] = residual_norm(params, windows.targets - forecast(params, windows.flat()))
    return rescore_after_outliers(params, values, scores)


def rescore_after_outliers(params: Mapping[str, Any], values: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Rescore the rows whose window holds a row above the cutoff.

    Rows past the last replaced row plus ``lookback`` see only original values,
    so only the stretches after flagged rows are walked one row at a time.
    """
    lookback = int(params["lookback"])
    cutoff = float(params["cutoff"])
    flagged = np.flatnonzero(np.nan_to_num(scores, nan=-np.inf) > cutoff)
    if flagged.size == 0:
        return scores
    cleaned = np.array(values, dtype=np.float64, copy=True)
    n = values.shape[0]
    dirty_until = -1
    t = int(flagged[0])
    while t < n:
        pred = None
        if t <= dirty_until:
            pred = forecast(params, cleaned[t - lookback:t].reshape(1, -1))[0]
            scores[t] = residual_norm(params, values[t] - pred)[0]
        if scores[t] > cutoff:
            if pred is None:
                pred = forecast(params, cleaned[t - lookback:t].reshape(1, -1))[0]
            cleaned[t] = pred
            dirty_until = t + lookback
        if t < dirty_until:
            t += 1
            continue
        k = int(np.searchsorted(flagged, t, side="right"))
        if k >= flagged.size:
            break
        t = int(flagged[k])
    logger.debug(f"{flagged.size} rows above the residual cutoff {cutoff:.4g}")
    return scores

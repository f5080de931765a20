"""Regression-based detection with automatic model selection.

Candidates are ordinary least squares, ridge over a 10^-3..10^2 grid and a
quadratic-feature least squares. They are ranked by k-fold (contiguous folds)
cross-validated RMSE on the training portion; among candidates within a small
tolerance of the best, the earliest in that order wins, so a simpler model is
kept when it fits as well. The raw score is the absolute target residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from loguru import logger
from sklearn.linear_model import LinearRegression, Ridge
from sklearn.model_selection import KFold, cross_val_score
from sklearn.pipeline import Pipeline, make_pipeline
from sklearn.preprocessing import PolynomialFeatures

from detectors.errors import BadSplit, SingularSystem, TooFewRows
from detectors.model import FittedModel, TrainStats
from tsdata.frame import ColumnRoles, MetricFrame
from utils.deadline import checkpoint

NAME = "RegressionAD"
RIDGE_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
SELECT_RTOL = 1e-6
SELECT_ATOL = 1e-9


@dataclass(frozen=True)
class RegressionSettings:
    train_test_split: float = 0.8
    train_cv_split: int = 5
    ridge_grid: tuple[float, ...] = RIDGE_GRID

    def __post_init__(self) -> None:
        if not 0 < self.train_test_split <= 1:
            raise BadSplit(f"train_test_split must be in (0, 1], got {self.train_test_split}")
        if self.train_cv_split < 2:
            raise BadSplit(f"train_cv_split must be >= 2, got {self.train_cv_split}")


def candidates(ridge_grid: tuple[float, ...] = RIDGE_GRID) -> list[tuple[str, Any]]:
    out: list[tuple[str, Any]] = [("ols", LinearRegression())]
    out.extend((f"ridge(alpha={a:g})", Ridge(alpha=a)) for a in ridge_grid)
    out.append(("quadratic", make_pipeline(PolynomialFeatures(degree=2, include_bias=False),
                                           LinearRegression())))
    return out


def _coefficients(estimator: Any) -> dict[str, Any]:
    if isinstance(estimator, Pipeline):
        poly = estimator.named_steps["polynomialfeatures"]
        lin = estimator.named_steps["linearregression"]
        return {"powers": np.asarray(poly.powers_, dtype=np.int64),
                "coef": np.asarray(lin.coef_, dtype=np.float64).ravel(),
                "intercept": float(np.ravel(lin.intercept_)[0])}
    return {"powers": None,
            "coef": np.asarray(estimator.coef_, dtype=np.float64).ravel(),
            "intercept": float(np.ravel(estimator.intercept_)[0])}


def predict(params: Mapping[str, Any], x: np.ndarray) -> np.ndarray:
    design = x
    if params.get("powers") is not None:
        powers = np.asarray(params["powers"])
        design = np.prod(x[:, None, :] ** powers[None, :, :], axis=2)
    return design @ np.asarray(params["coef"]) + float(params["intercept"])


def select_and_fit(x: np.ndarray, y: np.ndarray, settings: RegressionSettings) -> dict[str, Any]:
    n = x.shape[0]
    if n < 2 * settings.train_cv_split:
        raise BadSplit(f"{n} training rows cannot support {settings.train_cv_split}-fold validation",
                       rows=n, folds=settings.train_cv_split)
    folds = KFold(n_splits=settings.train_cv_split, shuffle=False)
    board: list[dict[str, Any]] = []
    pool = candidates(settings.ridge_grid)
    for name, estimator in pool:
        checkpoint(f"regression candidate {name}")
        rmse = -cross_val_score(estimator, x, y, cv=folds, scoring="neg_root_mean_squared_error")
        board.append({"candidate": name, "cv_rmse": float(np.mean(rmse))})
        logger.debug(f"regression candidate {name}: cv rmse {board[-1]['cv_rmse']:.6g}")

    best = min(entry["cv_rmse"] for entry in board)
    cutoff = best * (1 + SELECT_RTOL) + SELECT_ATOL
    chosen = next(i for i, entry in enumerate(board) if entry["cv_rmse"] <= cutoff)
    name, estimator = pool[chosen]
    estimator.fit(x, y)
    params = _coefficients(estimator)
    if not np.all(np.isfinite(params["coef"])) or not np.isfinite(params["intercept"]):
        raise SingularSystem(f"{name} produced non-finite coefficients")
    params.update({"selected": name, "leaderboard": board})
    return params


def fit_regression_ad(frame: MetricFrame, roles: ColumnRoles, settings: RegressionSettings | None = None,
                      seed: int = 42) -> tuple[FittedModel, np.ndarray]:
    """Fit on the first ``train_test_split`` share of rows and score every row.

    Returns the model and the absolute residual for each row of *frame*.
    """
    settings = settings or RegressionSettings()
    if not roles.feature_columns:
        raise BadSplit("regression needs feature_columns")
    if len(roles.target_columns) != 1:
        raise BadSplit("regression needs exactly one target column")
    target = roles.target_columns[0]
    features = list(roles.feature_columns)
    x_all = frame.values(features)
    y_all = frame.column(target)
    n_train = int(np.floor(settings.train_test_split * len(frame)))
    if n_train < 2:
        raise TooFewRows(n_train, 2, NAME)
    params = select_and_fit(x_all[:n_train], y_all[:n_train], settings)
    params.update({"target": target, "features": features, "n_train": n_train})
    scores = np.abs(y_all - predict(params, x_all))
    model = FittedModel(
        kind=NAME,
        parameters=params,
        train_stats=TrainStats.from_scores(scores[:n_train]),
        schema=(target, *features),
        config={"train_test_split": settings.train_test_split, "train_cv_split": settings.train_cv_split,
                "ridge_grid": list(settings.ridge_grid), "seed": seed},
    )
    logger.info(f"regression selected {params['selected']} on {n_train} rows")
    return model, scores


def score_regression(model: FittedModel, frame: MetricFrame) -> np.ndarray:
    params = model.parameters
    x = frame.values(params["features"])
    return np.abs(frame.column(params["target"]) - predict(params, x))

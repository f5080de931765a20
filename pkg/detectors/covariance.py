"""RelationshipAD / Covariance: Mahalanobis distance under a shrunk covariance."""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np
import scipy.linalg
from sklearn.covariance import empirical_covariance

from detectors.errors import SingularSystem, TooFewRows

NAME = "Covariance"


def shrunk_covariance(x: np.ndarray, alpha: float) -> np.ndarray:
    """(1 - alpha) * S + alpha * I, S the maximum-likelihood covariance."""
    cov = empirical_covariance(x, assume_centered=False)
    return (1.0 - alpha) * cov + alpha * np.eye(cov.shape[0])


def mahalanobis(x: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    sol = scipy.linalg.solve_triangular(chol, (x - mean).T, lower=True)
    return np.sqrt(np.sum(sol * sol, axis=0))


def fit_arrays(x: np.ndarray, hp: Mapping[str, Any], lookback: int = 0) -> tuple[dict[str, Any], np.ndarray]:
    n, d = x.shape
    if n < d + 1:
        raise TooFewRows(n, d + 1, NAME)
    alpha = float(hp["shrinkage"])
    cov = shrunk_covariance(x, alpha)
    try:
        chol = scipy.linalg.cholesky(cov, lower=True)
    except scipy.linalg.LinAlgError:
        raise SingularSystem(f"shrunk covariance not positive definite at shrinkage={alpha:g}") from None
    params = {"mean": x.mean(axis=0), "chol": chol, "shrinkage": alpha}
    return params, score_arrays(params, x)


def score_arrays(params: Mapping[str, Any], x: np.ndarray) -> np.ndarray:
    return mahalanobis(x, params["mean"], params["chol"])

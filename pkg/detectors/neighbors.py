"""NearestNeighbor: distance to the k-th nearest training row."""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np
from sklearn.neighbors import NearestNeighbors

from detectors.errors import TooFewRows

NAME = "NearestNeighbor"


def _index(reference: np.ndarray, k: int) -> NearestNeighbors:
    # kd_tree computes each pairwise distance directly, so results are exact
    return NearestNeighbors(n_neighbors=k, algorithm="kd_tree").fit(reference)


def fit_arrays(x: np.ndarray, hp: Mapping[str, Any], lookback: int = 0) -> tuple[dict[str, Any], np.ndarray]:
    k = int(hp["k"])
    n = x.shape[0]
    if n <= k:
        raise TooFewRows(n, k + 1, NAME)
    # querying without X excludes each training row from its own neighbours
    dist, _ = _index(x, k).kneighbors()
    params = {"reference": np.array(x, copy=True), "k": k}
    return params, dist[:, k - 1]


def score_arrays(params: Mapping[str, Any], x: np.ndarray) -> np.ndarray:
    k = int(params["k"])
    dist, _ = _index(np.asarray(params["reference"]), k).kneighbors(x, n_neighbors=k)
    return dist[:, k - 1]

"""Isolation forest built from scratch on flat numpy node arrays.

Each tree is grown on a subsample of ``min(max_samples, n)`` rows drawn
without replacement, splitting on a uniformly chosen non-constant feature at a
uniform cut, up to height ``ceil(log2(subsample))``. A row's score is
``2 ** (-E[h(x)] / c(subsample))``.
"""

from __future__ import annotations

import math
from typing import Any, Mapping

import numpy as np
from scipy.special import digamma

from detectors.errors import TooFewRows
from utils.deadline import checkpoint

NAME = "IsolationForest"
MIN_ROWS = 8
EULER_GAMMA = 0.5772156649015329
LEAF = -1


def harmonic(m: float | np.ndarray) -> float | np.ndarray:
    """H(m) = psi(m + 1) + gamma, exact for integers."""
    return digamma(np.asarray(m, dtype=np.float64) + 1.0) + EULER_GAMMA


def c_factor(n: int | np.ndarray) -> float | np.ndarray:
    """Average unsuccessful-search path length in a BST of n nodes."""
    n_arr = np.asarray(n, dtype=np.float64)
    safe = np.maximum(n_arr, 2.0)
    out = np.where(n_arr > 1, 2.0 * harmonic(safe - 1.0) - 2.0 * (safe - 1.0) / safe, 0.0)
    return float(out) if out.ndim == 0 else out


def grow_tree(x: np.ndarray, rng: np.random.Generator, height_limit: int) -> dict[str, np.ndarray]:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    size: list[int] = []

    def build(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        size.append(int(idx.size))
        if depth >= height_limit or idx.size <= 1:
            return node
        sub = x[idx]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        candidates = np.flatnonzero(hi > lo)
        if candidates.size == 0:
            return node
        q = int(rng.choice(candidates))
        cut = float(rng.uniform(lo[q], hi[q]))
        mask = sub[:, q] < cut
        feature[node] = q
        threshold[node] = cut
        left[node] = build(idx[mask], depth + 1)
        right[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(x.shape[0]), 0)
    return {
        "feature": np.asarray(feature, dtype=np.int64),
        "threshold": np.asarray(threshold, dtype=np.float64),
        "left": np.asarray(left, dtype=np.int64),
        "right": np.asarray(right, dtype=np.int64),
        "size": np.asarray(size, dtype=np.int64),
    }


def path_lengths(tree: Mapping[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    node = np.zeros(n, dtype=np.int64)
    depth = np.zeros(n, dtype=np.float64)
    rows = np.arange(n)
    feature = tree["feature"]
    active = feature[node] != LEAF
    while np.any(active):
        r = rows[active]
        nd = node[r]
        go_left = x[r, feature[nd]] < tree["threshold"][nd]
        node[r] = np.where(go_left, tree["left"][nd], tree["right"][nd])
        depth[r] += 1.0
        active = feature[node] != LEAF
    return depth + c_factor(tree["size"][node])


def fit_arrays(x: np.ndarray, hp: Mapping[str, Any], lookback: int = 0) -> tuple[dict[str, Any], np.ndarray]:
    n = x.shape[0]
    if n < MIN_ROWS:
        raise TooFewRows(n, MIN_ROWS, NAME)
    rng = np.random.default_rng(int(hp["seed"]))
    psi = min(int(hp["max_samples"]), n)
    height_limit = int(math.ceil(math.log2(psi)))
    trees = []
    for t in range(int(hp["n_trees"])):
        if t % 10 == 0:
            checkpoint(f"{NAME} tree {t}")
        idx = rng.choice(n, size=psi, replace=False)
        trees.append(grow_tree(x[idx], rng, height_limit))
    params = {"trees": trees, "subsample": psi}
    return params, score_arrays(params, x)


def score_arrays(params: Mapping[str, Any], x: np.ndarray) -> np.ndarray:
    trees = params["trees"]
    mean_path = np.mean([path_lengths(tree, x) for tree in trees], axis=0)
    return np.power(2.0, -mean_path / c_factor(int(params["subsample"])))

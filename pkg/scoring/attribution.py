"""Per-metric attribution of multivariate anomalies through PCA.

PCA is fit on the normal rows and keeps the leading components that explain
at least 90% of the variance. For an anomalous row with centred values ``c``
the deficit ``e = c - V V^T c`` is what the normal subspace cannot explain;
column j contributes ``e_j**2 / sum(e**2)``. A row lying inside the subspace
(zero deficit) falls back to ``c_j**2 / sum(c**2)``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.decomposition import PCA

from scoring.errors import NotMultivariate, TooFewNormalRows
from tsdata.frame import MetricFrame

VARIANCE_RETAINED = 0.90
MIN_NORMAL_ROWS = 3
DEFICIT_RTOL = 1e-10

Attribution = dict[int, list[tuple[str, float]]]


def _weights(vec: np.ndarray) -> np.ndarray | None:
    sq = vec * vec
    total = float(sq.sum())
    if total <= 0 or not np.isfinite(total):
        return None
    return sq / total


def pca_attribution(frame: MetricFrame, anomalous_rows: Sequence[int] | np.ndarray,
                    normal_rows: Sequence[int] | np.ndarray,
                    query: MetricFrame | None = None,
                    variance: float = VARIANCE_RETAINED) -> Attribution:
    """Ranked (column, weight) lists for each anomalous row.

    The PCA basis comes from ``normal_rows`` of *frame*; ``anomalous_rows``
    index *query* (defaults to *frame*). Weights in each list sum to 1.
    """
    if frame.width < 2:
        raise NotMultivariate(f"attribution needs at least 2 columns, got {frame.width}")
    normal = frame.values()[np.asarray(normal_rows, dtype=np.int64)]
    if normal.shape[0] < MIN_NORMAL_ROWS:
        raise TooFewNormalRows(f"{normal.shape[0]} normal rows, need {MIN_NORMAL_ROWS}")
    pca = PCA(svd_solver="full").fit(normal)
    cumulative = np.cumsum(pca.explained_variance_ratio_)
    k = int(np.searchsorted(cumulative, variance - 1e-12) + 1) if np.isfinite(cumulative).all() else 0
    k = min(k, pca.components_.shape[0])
    basis = pca.components_[:k].T

    names = frame.names
    source = (frame if query is None else query).values(names)
    out: Attribution = {}
    for row in np.asarray(anomalous_rows, dtype=np.int64):
        centred = source[row] - pca.mean_
        deficit = centred - basis @ (basis.T @ centred) if k else centred
        weights = None
        if float(deficit @ deficit) > DEFICIT_RTOL * max(float(centred @ centred), 1e-300):
            weights = _weights(deficit)
        if weights is None:
            weights = _weights(centred)
        if weights is None:
            weights = np.full(len(names), 1.0 / len(names))
        ranked = sorted(zip(names, weights.tolist()), key=lambda item: (-item[1], names.index(item[0])))
        out[int(row)] = [(name, float(w)) for name, w in ranked]
    return out

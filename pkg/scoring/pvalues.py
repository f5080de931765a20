"""Chi-square(1) p-values for standardized raw scores.

Only the upper tail counts: a score at or below the training mean gets p = 1.
For z > 0 the chi-square survival of z**2 with one degree of freedom equals
erfc(z / sqrt(2)), the two-sided normal tail.
"""

from __future__ import annotations

import math

import numpy as np
from loguru import logger
from scipy.special import erfc

from detectors.model import RawScoreSeries, TrainStats
from scoring.errors import NonFiniteScore

SQRT2 = math.sqrt(2.0)


def chi2_sf_df1(q: np.ndarray | float) -> np.ndarray:
    """Survival function of chi-square with 1 degree of freedom."""
    return erfc(np.sqrt(np.asarray(q, dtype=np.float64) / 2.0))


def chi_square_pvalues(raw: RawScoreSeries | np.ndarray, stats: TrainStats) -> np.ndarray:
    """One-sided p-values; unscored (NaN) rows stay NaN."""
    values = raw.values if isinstance(raw, RawScoreSeries) else np.asarray(raw, dtype=np.float64)
    if np.any(np.isinf(values)):
        raise NonFiniteScore("raw scores contain infinite values")
    scored = ~np.isnan(values)
    p = np.full(values.shape, np.nan)
    if not (math.isfinite(stats.std) and stats.std > 0):
        logger.warning(f"degenerate stats: training score std is {stats.std}, every p-value set to 1")
        p[scored] = 1.0
        return p
    z = (values[scored] - stats.mean) / stats.std
    p[scored] = np.where(z > 0, erfc(np.maximum(z, 0.0) / SQRT2), 1.0)
    return p

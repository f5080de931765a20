from __future__ import annotations

from utils.errors import AnomalyServiceError


class ScoringError(AnomalyServiceError):
    code = "scoring_error"


class NonFiniteScore(ScoringError):
    code = "non_finite_score"


class InvalidLabelingSpec(ScoringError):
    code = "invalid_labeling_spec"


class SpecMismatch(ScoringError):
    code = "spec_mismatch"


class TooFewNormalRows(ScoringError):
    code = "too_few_normal_rows"


class NotMultivariate(ScoringError):
    code = "not_multivariate"


class ModelNotFitted(ScoringError):
    code = "model_not_fitted"


class InsufficientRecentData(ScoringError):
    code = "insufficient_recent_data"

    def __init__(self, rows: int, required: int) -> None:
        super().__init__(f"recent data has {rows} rows, need at least {required}",
                         rows=rows, required=required)

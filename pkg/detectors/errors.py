from __future__ import annotations

from typing import Sequence

from utils.errors import AnomalyServiceError


class DetectorError(AnomalyServiceError):
    code = "detector_error"


class InvalidDetectorConfig(DetectorError):
    """Estimator/algorithm-type/hyperparameter problems, all reported at once."""

    code = "invalid_detector_config"

    def __init__(self, violations: Sequence[str]) -> None:
        super().__init__("; ".join(violations), violations=list(violations))
        self.violations = list(violations)


class TooFewRows(DetectorError):
    code = "too_few_rows"

    def __init__(self, rows: int, required: int, estimator: str = "") -> None:
        what = f"{estimator} needs" if estimator else "needs"
        super().__init__(f"{what} at least {required} rows, got {rows}",
                         rows=rows, required=required, estimator=estimator)


class NonFiniteLoss(DetectorError):
    code = "non_finite_loss"


class SchemaMismatch(DetectorError):
    code = "schema_mismatch"

    def __init__(self, expected: Sequence[str], got: Sequence[str]) -> None:
        super().__init__(f"model fit on {list(expected)}, got {list(got)}",
                         expected=list(expected), got=list(got))


class SingularSystem(DetectorError):
    code = "singular_system"


class DegenerateComponent(DetectorError):
    code = "degenerate_component"


class LikelihoodDecreased(DetectorError):
    code = "likelihood_decreased"


class BadSplit(DetectorError):
    code = "bad_split"


class TrainContainsFailures(DetectorError):
    code = "train_contains_failures"


class NoFailuresInValidation(DetectorError):
    code = "no_failures_in_validation"


class LengthMismatch(DetectorError):
    code = "length_mismatch"


class NotAMixtureModel(DetectorError):
    code = "not_a_mixture_model"


class ModelFormatError(DetectorError):
    code = "model_format_error"

from __future__ import annotations

from typing import Sequence

from utils.errors import AnomalyServiceError


class EvaluationError(AnomalyServiceError):
    code = "evaluation_error"


class LengthMismatch(EvaluationError):
    code = "length_mismatch"


class NoAnomaliesInTruth(EvaluationError):
    code = "no_anomalies_in_truth"


class BenchmarkError(EvaluationError):
    code = "benchmark_error"


class MissingAssetFiles(BenchmarkError):
    code = "missing_asset_files"

    def __init__(self, missing: Sequence[str]) -> None:
        super().__init__(f"missing benchmark files: {', '.join(missing)}", missing=list(missing))
        self.missing = list(missing)


class BudgetExceeded(BenchmarkError):
    code = "budget_exceeded"

    def __init__(self, asset: str, elapsed: float, budget: float) -> None:
        super().__init__(f"{asset}: {elapsed:.1f}s exceeds evaluation_time {budget:g}s",
                         asset=asset, elapsed=elapsed, budget=budget)

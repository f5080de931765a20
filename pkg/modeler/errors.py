"""Errors raised while building failure-mode catalogs and monitoring plans."""

from __future__ import annotations

from utils.errors import AnomalyServiceError


class ModelerError(AnomalyServiceError):
    code = "modeler_error"


class ClientUnavailable(ModelerError):
    code = "client_unavailable"


class UnparseableResponse(ModelerError):
    code = "unparseable_response"

    def __init__(self, stage: str, raw: str, message: str = "") -> None:
        super().__init__(message or f"{stage}: no list items in response", stage=stage)
        self.stage = stage
        self.raw = raw


class InvalidCatalog(ModelerError):
    code = "invalid_catalog"


class EmptyMapping(ModelerError):
    code = "empty_mapping"

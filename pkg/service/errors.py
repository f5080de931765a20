"""Errors raised by the job service and its HTTP surface."""

from __future__ import annotations

from typing import Sequence

from utils.errors import AnomalyServiceError


class ServiceError(AnomalyServiceError):
    code = "service_error"
    status = 500


class ValidationFailed(ServiceError):
    code = "validation_failed"
    status = 400

    def __init__(self, violations: Sequence[str]) -> None:
        super().__init__("; ".join(violations), violations=list(violations))
        self.violations = list(violations)


class UnknownEndpoint(ValidationFailed):
    code = "unknown_endpoint"


class NotFound(ServiceError):
    code = "not_found"
    status = 404


class NotReady(ServiceError):
    code = "not_ready"
    status = 409


class CapacityExceeded(ServiceError):
    code = "capacity_exceeded"
    status = 429


class LimitExceeded(ServiceError):
    code = "limit_exceeded"
    status = 400


class InvalidTransition(ServiceError):
    code = "invalid_transition"
    status = 409


class NoResults(NotFound):
    code = "no_results"


class FetchError(ServiceError):
    code = "fetch_failed"
    status = 502


class AuthFailed(FetchError):
    code = "auth_failed"


class ObjectNotFound(FetchError):
    code = "object_not_found"


class TooLarge(FetchError):
    code = "too_large"


class NetworkError(FetchError):
    code = "network_error"

"""Standalone client for the bencher benchmark service."""

from .client import (
    BencherClient,
    BencherError,
    BenchmarkDescription,
    ConnectionFailedError,
    DimensionMismatchError,
    InternalServiceError,
    MalformedRequestError,
    ServiceError,
    TypeMismatchError,
    UnknownBenchmarkError,
    Value,
    ValueOutOfRangeError,
    ValueType,
    WorkerTimeoutError,
    WorkerUnavailableError,
)

__version__ = "0.1.0"

__all__ = [
    "BencherClient",
    "BencherError",
    "BenchmarkDescription",
    "ConnectionFailedError",
    "DimensionMismatchError",
    "InternalServiceError",
    "MalformedRequestError",
    "ServiceError",
    "TypeMismatchError",
    "UnknownBenchmarkError",
    "Value",
    "ValueOutOfRangeError",
    "ValueType",
    "WorkerTimeoutError",
    "WorkerUnavailableError",
]

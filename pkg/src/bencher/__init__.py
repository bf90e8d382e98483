"""Self-hosted benchmarking service for black-box optimization.

A coordinator exposes one TCP port and routes framed JSON requests to
supervised worker processes, each hosting objective functions; a thin client
SDK and a CLI sit on top. See the README for the wire format and registry
schema.
"""

from typing import TYPE_CHECKING

from .client import Client, ClientConfig, ClientError, EvaluationError, TransportError
from .coordinator import Coordinator, CoordinatorConfig, CoordinatorStartupError
from .protocol import ErrorCode, EvalRequest, EvalResponse, Method, Value, ValueKind
from .registry import (
    BenchmarkType,
    Registry,
    RegistryEntry,
    RegistryError,
    UnknownBenchmarkError,
    load_registry,
    load_registry_file,
)

if TYPE_CHECKING:
    from .worker import BenchmarkDefinition, WorkerServer, serve

_WORKER_EXPORTS = ("BenchmarkDefinition", "WorkerServer", "serve")


def __getattr__(name: str):
    # Loaded lazily so `python -m bencher.worker` does not import the worker
    # module twice (once via the package, once as __main__).
    if name in _WORKER_EXPORTS:
        from . import worker

        return getattr(worker, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


__version__ = "0.1.0"

__all__ = [
    "BenchmarkDefinition",
    "BenchmarkType",
    "Client",
    "ClientConfig",
    "ClientError",
    "Coordinator",
    "CoordinatorConfig",
    "CoordinatorStartupError",
    "ErrorCode",
    "EvalRequest",
    "EvalResponse",
    "EvaluationError",
    "Method",
    "Registry",
    "RegistryEntry",
    "RegistryError",
    "TransportError",
    "UnknownBenchmarkError",
    "Value",
    "ValueKind",
    "WorkerServer",
    "load_registry",
    "load_registry_file",
    "serve",
    "__version__",
]

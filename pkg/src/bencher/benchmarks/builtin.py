"""Built-in benchmark suites and the registry that serves them.

Two worker processes host the defaults: one for the continuous suite
(bbob-*, d=10) and one for the bit-string suite (pbo-*, d=64; nqueens is the
8x8 board, concatenatedtrap drops to d=60 for its 5-bit blocks).
"""

from __future__ import annotations

import socket
import sys
from pathlib import Path

from ..registry import BenchmarkType, Direction, Registry, RegistryEntry
from ..worker import BenchmarkDefinition
from ..protocol import ValueKind
from .continuous import FUNCTIONS as CONTINUOUS_FUNCTIONS
from .continuous import ContinuousBenchmark
from .discrete import BASE_FUNCTIONS as DISCRETE_FUNCTIONS
from .discrete import DiscreteBenchmark

CONTINUOUS_DIMENSIONS = 10
BITSTRING_DIMENSIONS = 64
NQUEENS_EDGE = 8
TRAP_DIMENSIONS = 60  # nearest multiple of the 5-bit block size


def _discrete_dimensions(function_id: str) -> int:
    if function_id == "nqueens":
        return NQUEENS_EDGE * NQUEENS_EDGE
    if function_id == "concatenatedtrap":
        return TRAP_DIMENSIONS
    return BITSTRING_DIMENSIONS


def continuous_definitions(dimensions: int = CONTINUOUS_DIMENSIONS) -> list[BenchmarkDefinition]:
    definitions = []
    for function_id in CONTINUOUS_FUNCTIONS:
        bench = ContinuousBenchmark(function_id=function_id, dimensions=dimensions)
        definitions.append(
            BenchmarkDefinition(
                name=f"bbob-{function_id}",
                dimensions=dimensions,
                kind=ValueKind.CONTINUOUS,
                objective=bench.evaluate,
                direction=Direction.MIN,
            )
        )
    return definitions


def discrete_definitions() -> list[BenchmarkDefinition]:
    definitions = []
    for function_id in DISCRETE_FUNCTIONS:
        dimensions = _discrete_dimensions(function_id)
        bench = DiscreteBenchmark(function_id=function_id, dimensions=dimensions)
        definitions.append(
            BenchmarkDefinition(
                name=f"pbo-{function_id}",
                dimensions=dimensions,
                kind=ValueKind.BINARY,
                objective=bench.evaluate,
                direction=Direction.MAX,
            )
        )
    return definitions


def suite_definitions(suite: str) -> list[BenchmarkDefinition]:
    if suite == "bbob":
        return continuous_definitions()
    if suite == "pbo":
        return discrete_definitions()
    if suite == "all":
        return continuous_definitions() + discrete_definitions()
    raise ValueError(f"unknown suite {suite!r}")


def _worker_command(suite: str) -> tuple[str, ...]:
    return (sys.executable, "-m", "bencher.worker", "--suite", suite)


def builtin_registry(continuous_port: int, discrete_port: int) -> Registry:
    """The default registry: 16 benchmarks across two spawned workers."""
    entries: dict[str, RegistryEntry] = {}
    for definition in continuous_definitions():
        entries[definition.name] = RegistryEntry(
            name=definition.name,
            port=continuous_port,
            dimensions=definition.dimensions,
            type=BenchmarkType.PURELY_CONTINUOUS,
            direction=definition.direction,
            start_command=_worker_command("bbob"),
        )
    for definition in discrete_definitions():
        entries[definition.name] = RegistryEntry(
            name=definition.name,
            port=discrete_port,
            dimensions=definition.dimensions,
            type=BenchmarkType.BINARY,
            direction=definition.direction,
            start_command=_worker_command("pbo"),
        )
    return Registry(entries=entries)


def free_port() -> int:
    """Ask the OS for a currently free ephemeral port."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def write_builtin_registry(path: str | Path) -> Registry:
    """Write the built-in registry (fresh ephemeral worker ports) to a file."""
    registry = builtin_registry(free_port(), free_port())
    Path(path).write_text(registry.dumps(), encoding="utf-8")
    return registry

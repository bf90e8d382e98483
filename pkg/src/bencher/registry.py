"""Benchmark registry: the JSON document that tells the coordinator what to serve.

The document maps benchmark names to entries:

    {
      "lasso-dna": {"port": 50053, "dimensions": 180, "type": "purely_continuous"}
    }

Names match [a-z0-9-]+. Each entry pins the loopback port of the worker that
hosts the benchmark, its dimensionality, and its homogeneous variable type;
optional fields are "direction" ("min"/"max", default "min"), "start_command"
(argv the coordinator spawns; absent for externally managed plugin workers),
and "num_categories" (per-dimension category counts, categorical entries
only). Several names may share a port. Unknown per-entry fields are ignored;
malformed known fields and duplicate keys are hard errors.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterator, Mapping

from .protocol import ValueKind

NAME_RE = re.compile(r"[a-z0-9-]+\Z")

PORT_MIN = 1024
PORT_MAX = 65535


class BenchmarkType(str, Enum):
    PURELY_CONTINUOUS = "purely_continuous"
    BINARY = "binary"
    CATEGORICAL = "categorical"
    ORDINAL = "ordinal"


class Direction(str, Enum):
    MIN = "min"
    MAX = "max"


_KIND_BY_TYPE = {
    BenchmarkType.PURELY_CONTINUOUS: ValueKind.CONTINUOUS,
    BenchmarkType.BINARY: ValueKind.BINARY,
    BenchmarkType.CATEGORICAL: ValueKind.CATEGORICAL,
    BenchmarkType.ORDINAL: ValueKind.ORDINAL,
}


class RegistryError(ValueError):
    """The registry document is malformed."""


class UnknownBenchmarkError(KeyError):
    """Lookup of a name the registry does not contain."""


@dataclass(frozen=True)
class RegistryEntry:
    name: str
    port: int
    dimensions: int
    type: BenchmarkType
    direction: Direction = Direction.MIN
    start_command: tuple[str, ...] | None = None
    num_categories: tuple[int, ...] | None = None

    @property
    def value_kind(self) -> ValueKind:
        """The point coordinate kind every evaluate request must carry."""
        return _KIND_BY_TYPE[self.type]

    def describe_payload(self) -> dict[str, Any]:
        """Entry as exposed to clients (spawn details stay server-side)."""
        payload: dict[str, Any] = {
            "name": self.name,
            "dimensions": self.dimensions,
            "type": self.type.value,
            "direction": self.direction.value,
        }
        if self.num_categories is not None:
            payload["num_categories"] = list(self.num_categories)
        return payload

    def to_wire(self) -> dict[str, Any]:
        obj: dict[str, Any] = {
            "port": self.port,
            "dimensions": self.dimensions,
            "type": self.type.value,
            "direction": self.direction.value,
        }
        if self.start_command is not None:
            obj["start_command"] = list(self.start_command)
        if self.num_categories is not None:
            obj["num_categories"] = list(self.num_categories)
        return obj


@dataclass(frozen=True)
class Registry:
    """Parsed registry document; preserves entry order, keyed by name."""

    entries: Mapping[str, RegistryEntry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[RegistryEntry]:
        return iter(self.entries.values())

    def __contains__(self, name: object) -> bool:
        return name in self.entries

    def lookup(self, name: str) -> RegistryEntry:
        """Exact, case-sensitive lookup; raises UnknownBenchmarkError."""
        try:
            return self.entries[name]
        except KeyError:
            raise UnknownBenchmarkError(name) from None

    def names(self) -> list[str]:
        return sorted(self.entries)

    def ports(self) -> list[int]:
        return sorted({e.port for e in self})

    def to_wire(self) -> dict[str, Any]:
        return {name: entry.to_wire() for name, entry in self.entries.items()}

    def dumps(self) -> str:
        return json.dumps(self.to_wire(), indent=2, sort_keys=True) + "\n"


def _reject_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    obj: dict[str, Any] = {}
    for key, value in pairs:
        if key in obj:
            raise RegistryError(f"duplicate key {key!r} in registry document")
        obj[key] = value
    return obj


def _require_int(entry: Mapping[str, Any], name: str, fld: str) -> int:
    value = entry.get(fld)
    if not isinstance(value, int) or isinstance(value, bool):
        raise RegistryError(f"benchmark {name!r}: {fld!r} must be an integer")
    return value


def _parse_entry(name: str, raw: Any) -> RegistryEntry:
    if not NAME_RE.fullmatch(name):
        raise RegistryError(f"invalid benchmark name {name!r}: names match [a-z0-9-]+")
    if not isinstance(raw, dict):
        raise RegistryError(f"benchmark {name!r}: entry must be an object")
    for fld in ("port", "dimensions", "type"):
        if fld not in raw:
            raise RegistryError(f"benchmark {name!r}: missing required field {fld!r}")

    port = _require_int(raw, name, "port")
    if not PORT_MIN <= port <= PORT_MAX:
        raise RegistryError(f"benchmark {name!r}: port {port} outside [{PORT_MIN}, {PORT_MAX}]")

    dimensions = _require_int(raw, name, "dimensions")
    if dimensions < 1:
        raise RegistryError(f"benchmark {name!r}: dimensions must be positive")

    raw_type = raw.get("type")
    try:
        bench_type = BenchmarkType(raw_type)
    except ValueError:
        raise RegistryError(f"benchmark {name!r}: unknown type {raw_type!r}") from None

    raw_direction = raw.get("direction", "min")
    try:
        direction = Direction(raw_direction)
    except ValueError:
        raise RegistryError(f"benchmark {name!r}: direction must be 'min' or 'max'") from None

    start_command: tuple[str, ...] | None = None
    if "start_command" in raw:
        raw_cmd = raw["start_command"]
        if (
            not isinstance(raw_cmd, list)
            or not raw_cmd
            or not all(isinstance(a, str) for a in raw_cmd)
        ):
            raise RegistryError(
                f"benchmark {name!r}: start_command must be a non-empty list of strings"
            )
        start_command = tuple(raw_cmd)

    num_categories: tuple[int, ...] | None = None
    if bench_type is BenchmarkType.CATEGORICAL:
        if "num_categories" not in raw:
            raise RegistryError(f"benchmark {name!r}: categorical entries require num_categories")
        raw_counts = raw["num_categories"]
        if not isinstance(raw_counts, list) or len(raw_counts) != dimensions:
            raise RegistryError(
                f"benchmark {name!r}: num_categories must list one count per dimension"
            )
        for count in raw_counts:
            if not isinstance(count, int) or isinstance(count, bool) or count < 2:
                raise RegistryError(
                    f"benchmark {name!r}: category counts must be integers >= 2"
                )
        num_categories = tuple(raw_counts)
    elif "num_categories" in raw:
        raise RegistryError(
            f"benchmark {name!r}: num_categories is only valid for categorical entries"
        )

    return RegistryEntry(
        name=name,
        port=port,
        dimensions=dimensions,
        type=bench_type,
        direction=direction,
        start_command=start_command,
        num_categories=num_categories,
    )


def load_registry(text: str) -> Registry:
    """Parse a registry document; raises RegistryError on any defect."""
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except RegistryError:
        raise
    except ValueError as e:
        raise RegistryError(f"registry is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise RegistryError("registry document must be a JSON object")
    entries = {name: _parse_entry(name, raw) for name, raw in doc.items()}
    return Registry(entries=entries)


def load_registry_file(path: str | Path) -> Registry:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise RegistryError(f"cannot read registry {path}: {e}") from None
    return load_registry(text)

"""Standalone client for the bencher coordinator.

Speaks the service's wire protocol directly — length-prefixed JSON frames
over TCP — with no dependency on the server implementation. Each frame is a
4-byte big-endian length followed by that many bytes of UTF-8 JSON (16 MiB
cap). Service errors surface as one exception class per error code.
"""

from __future__ import annotations

import json
import math
import os
import socket
import struct
import time
import uuid
from dataclasses import dataclass
from enum import Enum
from typing import Any, NamedTuple, Sequence

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 50051
MAX_FRAME_BYTES = 16 * 1024 * 1024
MAX_ID_BYTES = 64
_HEADER = struct.Struct(">I")


class ValueType(str, Enum):
    """Coordinate types a benchmark may accept."""

    CONTINUOUS = "continuous"
    BINARY = "binary"
    ORDINAL = "ordinal"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Value:
    """One coordinate of a point: its type tag and its value."""

    type: ValueType
    value: float

    def to_wire(self) -> dict[str, Any]:
        if self.type is ValueType.CONTINUOUS:
            return {"type": self.type.value, "value": float(self.value)}
        number = float(self.value)
        if not number.is_integer():
            raise ValueError(f"{self.type.value} value must be an integer: {self.value!r}")
        return {"type": self.type.value, "value": int(number)}


class BenchmarkDescription(NamedTuple):
    """One row of list_benchmarks(). `type` is the service's string verbatim."""

    name: str
    dimensions: int
    type: str
    direction: str

    @property
    def value_type(self) -> ValueType:
        """The coordinate type points for this benchmark must carry."""
        if self.type == "purely_continuous":
            return ValueType.CONTINUOUS
        return ValueType(self.type)


class BencherError(Exception):
    """Base class for everything this client raises on purpose."""


class ConnectionFailedError(BencherError):
    """The coordinator could not be reached, or the connection broke."""


class ServiceError(BencherError):
    """An error response from the service; subclassed per error code."""

    code = "internal"

    def __init__(self, message: str, benchmark: str | None = None):
        super().__init__(message)
        self.message = message
        self.benchmark = benchmark


class UnknownBenchmarkError(ServiceError):
    code = "unknown_benchmark"


class DimensionMismatchError(ServiceError):
    code = "dimension_mismatch"


class TypeMismatchError(ServiceError):
    code = "type_mismatch"


class ValueOutOfRangeError(ServiceError):
    code = "value_out_of_range"


class WorkerUnavailableError(ServiceError):
    code = "worker_unavailable"


class WorkerTimeoutError(ServiceError):
    code = "worker_timeout"


class MalformedRequestError(ServiceError):
    code = "malformed_request"


class InternalServiceError(ServiceError):
    code = "internal"


ERROR_BY_CODE: dict[str, type[ServiceError]] = {
    cls.code: cls
    for cls in (
        UnknownBenchmarkError,
        DimensionMismatchError,
        TypeMismatchError,
        ValueOutOfRangeError,
        WorkerUnavailableError,
        WorkerTimeoutError,
        MalformedRequestError,
        InternalServiceError,
    )
}


def encode_request(
    request_id: str,
    method: str,
    benchmark: str | None = None,
    values: Sequence[Value] | None = None,
) -> bytes:
    """One framed request in the service's canonical encoding."""
    if not 1 <= len(request_id.encode("utf-8")) <= MAX_ID_BYTES:
        raise ValueError(f"request id must be 1..{MAX_ID_BYTES} UTF-8 bytes")
    obj: dict[str, Any] = {"id": request_id, "method": method}
    if benchmark is not None:
        obj["benchmark"] = benchmark
    if values is not None:
        obj["values"] = [value.to_wire() for value in values]
    body = json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode(
        "utf-8"
    )
    if len(body) > MAX_FRAME_BYTES:
        raise ValueError(f"frame body of {len(body)} bytes exceeds the {MAX_FRAME_BYTES} cap")
    return _HEADER.pack(len(body)) + body


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionFailedError("connection closed by the coordinator")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_response(sock: socket.socket) -> dict[str, Any]:
    """Read one frame and parse it as a response object."""
    (length,) = _HEADER.unpack(_recv_exact(sock, _HEADER.size))
    if length > MAX_FRAME_BYTES:
        raise ConnectionFailedError(f"peer announced an oversized {length}-byte frame")
    body = _recv_exact(sock, length)
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConnectionFailedError(f"undecodable frame from coordinator: {e}") from None
    if not isinstance(obj, dict) or "status" not in obj:
        raise ConnectionFailedError("peer sent something other than a response")
    return obj


def _env_host() -> str:
    return os.environ.get("BENCHER_HOST") or DEFAULT_HOST


def _env_port() -> int:
    raw = os.environ.get("BENCHER_PORT")
    if raw is None or not raw.strip():
        return DEFAULT_PORT
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"BENCHER_PORT is not an integer: {raw!r}") from None


class BencherClient:
    """Evaluate benchmarks served by a coordinator.

    Connects lazily on first use and keeps one connection alive across
    calls. The initial connect is retried `connect_retries` extra times,
    `retry_spacing` seconds apart. A reply slower than the timeout raises
    WorkerTimeoutError; a broken or unreachable coordinator raises
    ConnectionFailedError; error responses raise the ServiceError subclass
    matching their code. Evaluation errors are never retried.
    """

    def __init__(
        self,
        host: str | None = None,
        port: int | None = None,
        *,
        connect_timeout: float = 10.0,
        eval_timeout: float = 600.0,
        connect_retries: int = 3,
        retry_spacing: float = 1.0,
    ):
        self.host = host if host is not None else _env_host()
        self.port = port if port is not None else _env_port()
        self.connect_timeout = connect_timeout
        self.eval_timeout = eval_timeout
        self.connect_retries = connect_retries
        self.retry_spacing = retry_spacing
        self._sock: socket.socket | None = None

    # -- connection management --

    def _connect(self) -> socket.socket:
        last_error: OSError | None = None
        attempts = 1 + max(0, self.connect_retries)
        for attempt in range(attempts):
            if attempt:
                time.sleep(self.retry_spacing)
            try:
                return socket.create_connection(
                    (self.host, self.port), timeout=self.connect_timeout
                )
            except OSError as e:
                last_error = e
        raise ConnectionFailedError(
            f"cannot connect to {self.host}:{self.port} "
            f"after {attempts} attempts: {last_error}"
        )

    def _ensure_connected(self) -> socket.socket:
        if self._sock is None:
            self._sock = self._connect()
        return self._sock

    def _drop(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def close(self) -> None:
        self._drop()

    def __enter__(self) -> "BencherClient":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    # -- request plumbing --

    def _call(
        self,
        method: str,
        benchmark: str | None = None,
        values: Sequence[Value] | None = None,
        timeout: float | None = None,
    ) -> dict[str, Any]:
        request_id = uuid.uuid4().hex
        frame = encode_request(request_id, method, benchmark, values)

        sock = self._ensure_connected()
        try:
            sock.sendall(frame)
        except OSError:
            # the cached connection died in between calls; the frame was
            # never delivered, so one reconnect-and-resend is safe
            self._drop()
            sock = self._ensure_connected()
            try:
                sock.sendall(frame)
            except OSError as e:
                self._drop()
                raise ConnectionFailedError(f"cannot send request: {e}") from None

        sock.settimeout(timeout if timeout is not None else self.eval_timeout)
        try:
            response = read_response(sock)
        except TimeoutError:
            self._drop()
            raise WorkerTimeoutError(
                f"no reply within {timeout if timeout is not None else self.eval_timeout:g}s",
                benchmark,
            ) from None
        except OSError as e:
            self._drop()
            raise ConnectionFailedError(f"connection failed mid-call: {e}") from None
        except ConnectionFailedError:
            self._drop()
            raise

        if response.get("id") != request_id:
            self._drop()
            raise ConnectionFailedError(
                f"response id {response.get('id')!r} does not match request id {request_id!r}"
            )
        return response

    @staticmethod
    def _raise_on_error(response: dict[str, Any], benchmark: str | None) -> dict[str, Any]:
        if response.get("status") == "ok":
            return response
        code = str(response.get("error_code", "internal"))
        message = str(response.get("message", "") or f"service reported {code}")
        raise ERROR_BY_CODE.get(code, InternalServiceError)(message, benchmark)

    # -- public surface --

    def evaluate_point(
        self, benchmark: str, values: Sequence[Value], timeout: float | None = None
    ) -> float:
        """Objective value of one point, as computed by the owning worker."""
        response = self._raise_on_error(
            self._call("evaluate", benchmark, values, timeout), benchmark
        )
        result = response.get("result")
        if not isinstance(result, (int, float)) or isinstance(result, bool):
            raise ConnectionFailedError(f"ok response carried no numeric result: {result!r}")
        result = float(result)
        if not math.isfinite(result):
            raise ConnectionFailedError(f"non-finite result from service: {result!r}")
        return result

    def describe(self, benchmark: str) -> dict[str, Any]:
        """The coordinator's metadata for one benchmark."""
        response = self._raise_on_error(self._call("describe", benchmark), benchmark)
        payload = response.get("payload")
        return dict(payload) if isinstance(payload, dict) else {}

    def list_benchmarks(self) -> list[BenchmarkDescription]:
        """Every benchmark the coordinator serves, sorted by name."""
        response = self._raise_on_error(self._call("list"), None)
        rows = []
        for raw in response.get("payload") or []:
            rows.append(
                BenchmarkDescription(
                    name=str(raw["name"]),
                    dimensions=int(raw["dimensions"]),
                    type=str(raw["type"]),
                    direction=str(raw["direction"]),
                )
            )
        return sorted(rows, key=lambda row: row.name)

    def health(self) -> bool:
        """True when the coordinator answers its health check."""
        try:
            response = self._call("health")
        except BencherError:
            return False
        return response.get("status") == "ok"

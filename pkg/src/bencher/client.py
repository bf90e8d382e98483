"""Client SDK: evaluate benchmarks over a coordinator connection.

    from bencher import Client, Value, ValueKind

    with Client() as client:
        result = client.evaluate_point(
            "bbob-sphere", [Value(ValueKind.CONTINUOUS, 0.5)] * 10
        )

The connection is opened lazily on first use and kept alive across calls.
Failures to connect are retried per config; evaluation errors (anything the
service answers with an error_code) are never retried and surface as
EvaluationError. BENCHER_HOST and BENCHER_PORT override the default
coordinator address.
"""

from __future__ import annotations

import os
import socket
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Sequence

from .protocol import (
    ErrorCode,
    EvalRequest,
    EvalResponse,
    Method,
    ProtocolError,
    Value,
    ValueKind,
    encode_frame,
    parse_message,
    recv_frame,
)
from .registry import BenchmarkType, Direction

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 50051


def _default_host() -> str:
    return os.environ.get("BENCHER_HOST") or DEFAULT_HOST


def _default_port() -> int:
    raw = os.environ.get("BENCHER_PORT")
    if raw is None or not raw.strip():
        return DEFAULT_PORT
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"BENCHER_PORT is not an integer: {raw!r}") from None


class ClientError(Exception):
    """Base class for client-side failures."""


class TransportError(ClientError):
    """Could not reach or keep a connection to the coordinator."""


class EvaluationError(ClientError):
    """The service answered with an error; carries the typed code."""

    def __init__(self, code: ErrorCode, message: str, benchmark: str | None = None):
        super().__init__(f"{code.value}: {message}")
        self.code = code
        self.message = message
        self.benchmark = benchmark


@dataclass
class ClientConfig:
    host: str = field(default_factory=_default_host)
    port: int = field(default_factory=_default_port)
    connect_timeout: float = 10.0
    eval_timeout: float = 600.0
    connect_retries: int = 3  # additional attempts after the first, 1 s apart
    retry_spacing: float = 1.0


@dataclass(frozen=True)
class BenchmarkInfo:
    """One row of a list_benchmarks() result."""

    name: str
    dimensions: int
    type: BenchmarkType
    direction: Direction

    @property
    def value_kind(self) -> ValueKind:
        return {
            BenchmarkType.PURELY_CONTINUOUS: ValueKind.CONTINUOUS,
            BenchmarkType.BINARY: ValueKind.BINARY,
            BenchmarkType.CATEGORICAL: ValueKind.CATEGORICAL,
            BenchmarkType.ORDINAL: ValueKind.ORDINAL,
        }[self.type]


class Client:
    """Thin blocking client for the coordinator's framed TCP protocol."""

    def __init__(self, config: ClientConfig | None = None, **overrides: Any) -> None:
        if config is None:
            config = ClientConfig(**overrides)
        elif overrides:
            raise TypeError("pass either a config or keyword overrides, not both")
        self.config = config
        self._sock: socket.socket | None = None

    # ---- connection management ----

    def _connect(self) -> socket.socket:
        config = self.config
        attempts = 1 + max(0, config.connect_retries)
        last_error: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                time.sleep(config.retry_spacing)
            try:
                sock = socket.create_connection(
                    (config.host, config.port), timeout=config.connect_timeout
                )
                sock.settimeout(config.eval_timeout)
                return sock
            except OSError as e:
                last_error = e
        raise TransportError(
            f"cannot connect to {config.host}:{config.port} "
            f"after {attempts} attempts: {last_error}"
        )

    def _ensure_connected(self) -> socket.socket:
        if self._sock is None:
            self._sock = self._connect()
        return self._sock

    def _drop_connection(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def close(self) -> None:
        self._drop_connection()

    def __enter__(self) -> "Client":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    # ---- request plumbing ----

    def _call(self, request: EvalRequest, timeout: float | None = None) -> EvalResponse:
        frame_bytes = encode_frame(request)
        sock = self._ensure_connected()
        try:
            sock.sendall(frame_bytes)
        except OSError:
            # A kept-alive connection died in between calls; the request was
            # not delivered, so one transparent reconnect is safe.
            self._drop_connection()
            sock = self._ensure_connected()
            try:
                sock.sendall(frame_bytes)
            except OSError as e:
                self._drop_connection()
                raise TransportError(f"cannot send request: {e}") from None
        previous_timeout = sock.gettimeout()
        if timeout is not None:
            sock.settimeout(timeout)
        try:
            body = recv_frame(sock)
        except TimeoutError:
            self._drop_connection()
            raise EvaluationError(
                ErrorCode.WORKER_TIMEOUT,
                f"no response within {timeout if timeout is not None else self.config.eval_timeout:g}s",
                request.benchmark,
            ) from None
        except (OSError, ProtocolError) as e:
            self._drop_connection()
            raise TransportError(f"connection lost awaiting response: {e}") from None
        finally:
            if timeout is not None and self._sock is not None:
                self._sock.settimeout(previous_timeout)
        if body is None:
            self._drop_connection()
            raise TransportError("coordinator closed the connection")
        try:
            message = parse_message(body)
        except ProtocolError as e:
            self._drop_connection()
            raise TransportError(f"unparseable response: {e}") from None
        if not isinstance(message, EvalResponse):
            self._drop_connection()
            raise TransportError("coordinator sent a request, expected a response")
        if message.id != request.id:
            self._drop_connection()
            raise TransportError(
                f"response id {message.id!r} does not match request id {request.id!r}"
            )
        return message

    @staticmethod
    def _fresh_id() -> str:
        return uuid.uuid4().hex

    def _raise_on_error(self, response: EvalResponse, benchmark: str | None) -> EvalResponse:
        if response.status == "error":
            assert response.error_code is not None
            raise EvaluationError(response.error_code, response.message or "", benchmark)
        return response

    # ---- public surface ----

    def evaluate_point(
        self,
        benchmark: str,
        values: Sequence[Value],
        timeout: float | None = None,
    ) -> float:
        """Evaluate one point; returns the objective value.

        Raises EvaluationError (typed error_code) on any service error and
        TransportError when the coordinator cannot be reached. Evaluation
        errors are never retried.
        """
        request = EvalRequest(
            id=self._fresh_id(),
            method=Method.EVALUATE,
            benchmark=benchmark,
            values=tuple(values),
        )
        response = self._raise_on_error(self._call(request, timeout), benchmark)
        if response.result is None:
            raise TransportError("ok response without a result")
        return response.result

    def describe(self, benchmark: str) -> dict[str, Any]:
        """Benchmark metadata as served by the coordinator."""
        request = EvalRequest(id=self._fresh_id(), method=Method.DESCRIBE, benchmark=benchmark)
        response = self._raise_on_error(self._call(request), benchmark)
        return dict(response.payload or {})

    def list_benchmarks(self) -> list[BenchmarkInfo]:
        """All benchmarks the coordinator serves, sorted by name."""
        request = EvalRequest(id=self._fresh_id(), method=Method.LIST)
        response = self._raise_on_error(self._call(request), None)
        rows = []
        for raw in response.payload or []:
            rows.append(
                BenchmarkInfo(
                    name=raw["name"],
                    dimensions=raw["dimensions"],
                    type=BenchmarkType(raw["type"]),
                    direction=Direction(raw["direction"]),
                )
            )
        return sorted(rows, key=lambda info: info.name)

    def health(self) -> bool:
        """True if the coordinator answers its health check."""
        request = EvalRequest(id=self._fresh_id(), method=Method.HEALTH)
        return self._call(request).status == "ok"

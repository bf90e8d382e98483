"""Framed wire protocol spoken between clients, the coordinator, and workers.

Every message travels as one frame: a 4-byte big-endian unsigned length N
followed by exactly N bytes of UTF-8 JSON encoding a single object. N is
capped at 16 MiB; a peer announcing a larger frame is unrecoverable and the
connection must be closed.

    Requests:  {"id", "method", "benchmark"?, "values"?}
    Responses: {"id", "status", "result"?, "payload"?, "error_code"?, "message"?}

"values" entries are objects {"type": <value kind>, "value": <number>}.

Frames are emitted in canonical form: compact separators, fields in the order
listed above, raw UTF-8 (no \\u escaping), and floats printed with the
shortest representation that parses back to the same double, so a decoded
number re-encodes to the same bytes. Unknown object fields are ignored on
decode so the format can grow without breaking older peers; known fields with
the wrong shape are rejected.
"""

from __future__ import annotations

import json
import math
import socket
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Any, Sequence

MAX_FRAME_BYTES = 16 * 1024 * 1024
HEADER_BYTES = 4
MAX_ID_BYTES = 64


class ValueKind(str, Enum):
    CONTINUOUS = "continuous"
    ORDINAL = "ordinal"
    BINARY = "binary"
    CATEGORICAL = "categorical"


class Method(str, Enum):
    EVALUATE = "evaluate"
    DESCRIBE = "describe"
    LIST = "list"
    HEALTH = "health"


class ErrorCode(str, Enum):
    UNKNOWN_BENCHMARK = "unknown_benchmark"
    DIMENSION_MISMATCH = "dimension_mismatch"
    TYPE_MISMATCH = "type_mismatch"
    VALUE_OUT_OF_RANGE = "value_out_of_range"
    WORKER_UNAVAILABLE = "worker_unavailable"
    WORKER_TIMEOUT = "worker_timeout"
    MALFORMED_REQUEST = "malformed_request"
    INTERNAL = "internal"


class ProtocolError(Exception):
    """Base class for wire-protocol failures."""


class FrameTooLargeError(ProtocolError):
    """Announced or produced frame exceeds MAX_FRAME_BYTES; close the connection."""


class MessageInvariantError(ProtocolError):
    """A locally built message violates an invariant; refused before encoding."""


class MalformedFrameError(ProtocolError):
    """A received frame does not parse into a valid message."""

    def __init__(self, reason: str, frame_id: str | None = None):
        super().__init__(reason)
        self.reason = reason
        # Best-effort id extracted from the broken frame so the peer can
        # still correlate the error response.
        self.frame_id = frame_id


@dataclass(frozen=True)
class MalformedFrame:
    """Placeholder yielded by decode_frames for a frame that failed to parse."""

    reason: str
    frame_id: str | None = None


def _is_number(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


@dataclass(frozen=True)
class Value:
    """One coordinate of a point: a kind tag plus a number."""

    kind: ValueKind
    value: float

    def in_range(self) -> bool:
        """True if the number is admissible for the kind.

        continuous: [0, 1]; binary: {0, 1}; ordinal/categorical: integral >= 0.
        """
        v = self.value
        if not _is_number(v):
            return False
        if self.kind is ValueKind.CONTINUOUS:
            return 0.0 <= v <= 1.0
        if self.kind is ValueKind.BINARY:
            return v == 0 or v == 1
        # NaN fails the comparison, infinities fail is_integer().
        return v >= 0 and float(v).is_integer()

    def to_wire(self) -> dict[str, Any]:
        v = self.value
        if self.kind is ValueKind.CONTINUOUS:
            v = float(v)
        elif _is_number(v) and float(v).is_integer():
            v = int(v)
        return {"type": self.kind.value, "value": v}

    @classmethod
    def from_wire(cls, obj: Any) -> "Value":
        """Parse a wire values entry; structurally strict, range-lenient.

        Range checking is deliberately left to validate_point so servers can
        answer value_out_of_range rather than malformed_request.
        """
        if not isinstance(obj, dict):
            raise MalformedFrameError("values entries must be objects")
        kind = obj.get("type")
        if not isinstance(kind, str):
            raise MalformedFrameError("values entry is missing a string 'type'")
        try:
            kind = ValueKind(kind)
        except ValueError:
            raise MalformedFrameError(f"unknown value type {kind!r}") from None
        value = obj.get("value")
        if not _is_number(value):
            raise MalformedFrameError("values entry is missing a numeric 'value'")
        return cls(kind=kind, value=value)


def _id_ok(rid: Any, *, allow_empty: bool) -> bool:
    if not isinstance(rid, str):
        return False
    if not allow_empty and not rid:
        return False
    return len(rid.encode("utf-8")) <= MAX_ID_BYTES


@dataclass
class EvalRequest:
    """Client-to-server message."""

    id: str
    method: Method
    benchmark: str | None = None
    values: tuple[Value, ...] | None = None

    def __post_init__(self) -> None:
        if isinstance(self.method, str) and not isinstance(self.method, Method):
            self.method = Method(self.method)
        if self.values is not None:
            self.values = tuple(self.values)

    def validate(self) -> None:
        """Raise MessageInvariantError if this request must not be sent."""
        if not _id_ok(self.id, allow_empty=False):
            raise MessageInvariantError(
                f"request id must be a non-empty string of at most {MAX_ID_BYTES} UTF-8 bytes"
            )
        if not isinstance(self.method, Method):
            raise MessageInvariantError(f"unknown method {self.method!r}")
        if self.method in (Method.EVALUATE, Method.DESCRIBE):
            if not isinstance(self.benchmark, str) or not self.benchmark:
                raise MessageInvariantError(f"method {self.method.value} requires a benchmark name")
        if self.method is Method.EVALUATE:
            if self.values is None:
                raise MessageInvariantError("method evaluate requires values")
            for i, v in enumerate(self.values):
                if not isinstance(v, Value):
                    raise MessageInvariantError(f"values[{i}] is not a Value")
                if not v.in_range():
                    raise MessageInvariantError(
                        f"values[{i}] out of range for kind {v.kind.value}: {v.value!r}"
                    )

    def to_wire(self) -> dict[str, Any]:
        obj: dict[str, Any] = {"id": self.id, "method": self.method.value}
        if self.benchmark is not None:
            obj["benchmark"] = self.benchmark
        if self.values is not None:
            obj["values"] = [v.to_wire() for v in self.values]
        return obj


@dataclass
class EvalResponse:
    """Server-to-client message; id echoes the request id."""

    id: str
    status: str
    result: float | None = None
    payload: Any = None
    error_code: ErrorCode | None = None
    message: str | None = None

    def __post_init__(self) -> None:
        if isinstance(self.error_code, str) and not isinstance(self.error_code, ErrorCode):
            self.error_code = ErrorCode(self.error_code)
        if self.result is not None and _is_number(self.result):
            self.result = float(self.result)

    def validate(self) -> None:
        """Raise MessageInvariantError if this response must not be sent."""
        if not _id_ok(self.id, allow_empty=True):
            raise MessageInvariantError(
                f"response id must be a string of at most {MAX_ID_BYTES} UTF-8 bytes"
            )
        if self.status not in ("ok", "error"):
            raise MessageInvariantError(f"status must be 'ok' or 'error', got {self.status!r}")
        if self.status == "ok" and self.error_code is not None:
            raise MessageInvariantError("status=ok forbids error_code")
        if self.status == "error":
            if self.error_code is None:
                raise MessageInvariantError("status=error requires error_code")
            if self.result is not None:
                raise MessageInvariantError("status=error forbids result")
        if self.result is not None and not math.isfinite(self.result):
            raise MessageInvariantError(f"result must be finite, got {self.result!r}")
        if self.message is not None and not isinstance(self.message, str):
            raise MessageInvariantError("message must be a string")

    def to_wire(self) -> dict[str, Any]:
        obj: dict[str, Any] = {"id": self.id, "status": self.status}
        if self.result is not None:
            obj["result"] = float(self.result)
        if self.payload is not None:
            obj["payload"] = self.payload
        if self.error_code is not None:
            obj["error_code"] = self.error_code.value
        if self.message is not None:
            obj["message"] = self.message
        return obj


def ok_response(request_id: str, result: float | None = None, payload: Any = None) -> EvalResponse:
    return EvalResponse(id=request_id, status="ok", result=result, payload=payload)


def error_response(request_id: str | None, code: ErrorCode, message: str) -> EvalResponse:
    return EvalResponse(id=request_id or "", status="error", error_code=code, message=message)


def frame(payload: bytes) -> bytes:
    """Wrap a message body in the 4-byte big-endian length header."""
    if len(payload) > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"frame of {len(payload)} bytes exceeds {MAX_FRAME_BYTES}")
    return struct.pack(">I", len(payload)) + payload


def serialize_message(msg: EvalRequest | EvalResponse) -> bytes:
    """Validate and encode a message to its canonical JSON bytes (no header)."""
    msg.validate()
    try:
        text = json.dumps(msg.to_wire(), separators=(",", ":"), ensure_ascii=False, allow_nan=False)
    except ValueError as e:
        raise MessageInvariantError(f"message is not JSON-serializable: {e}") from None
    return text.encode("utf-8")


def encode_frame(msg: EvalRequest | EvalResponse) -> bytes:
    """Validate and encode a message to a complete frame (header + body)."""
    return frame(serialize_message(msg))


def _reject_constant(name: str) -> float:
    raise ValueError(f"non-finite JSON number {name}")


def parse_message(body: bytes) -> EvalRequest | EvalResponse:
    """Parse one frame body. Raises MalformedFrameError with any extractable id."""
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedFrameError("frame is not valid UTF-8") from None
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except ValueError:
        raise MalformedFrameError("frame is not valid JSON") from None
    if not isinstance(obj, dict):
        raise MalformedFrameError("frame must encode a JSON object")
    rid = obj.get("id")
    frame_id = rid if _id_ok(rid, allow_empty=True) else None
    if "method" in obj:
        return _request_from_wire(obj, frame_id)
    if "status" in obj:
        return _response_from_wire(obj, frame_id)
    raise MalformedFrameError("object is neither a request nor a response", frame_id)


def _request_from_wire(obj: dict[str, Any], frame_id: str | None) -> EvalRequest:
    rid = obj.get("id")
    if not _id_ok(rid, allow_empty=False):
        raise MalformedFrameError(
            f"request id must be a non-empty string of at most {MAX_ID_BYTES} UTF-8 bytes", frame_id
        )
    method = obj.get("method")
    if not isinstance(method, str):
        raise MalformedFrameError("request is missing a string 'method'", frame_id)
    try:
        method = Method(method)
    except ValueError:
        raise MalformedFrameError(f"unknown method {method!r}", frame_id) from None

    benchmark = obj.get("benchmark")
    if benchmark is not None and not isinstance(benchmark, str):
        raise MalformedFrameError("'benchmark' must be a string", frame_id)
    if method in (Method.EVALUATE, Method.DESCRIBE) and not benchmark:
        raise MalformedFrameError(f"method {method.value} requires a benchmark name", frame_id)

    values: tuple[Value, ...] | None = None
    raw_values = obj.get("values")
    if raw_values is not None:
        if not isinstance(raw_values, list):
            raise MalformedFrameError("'values' must be an array", frame_id)
        try:
            values = tuple(Value.from_wire(item) for item in raw_values)
        except MalformedFrameError as e:
            raise MalformedFrameError(e.reason, frame_id) from None
    elif method is Method.EVALUATE:
        raise MalformedFrameError("method evaluate requires values", frame_id)

    return EvalRequest(id=rid, method=method, benchmark=benchmark, values=values)


def _response_from_wire(obj: dict[str, Any], frame_id: str | None) -> EvalResponse:
    rid = obj.get("id")
    if not _id_ok(rid, allow_empty=True):
        raise MalformedFrameError(
            f"response id must be a string of at most {MAX_ID_BYTES} UTF-8 bytes", frame_id
        )
    status = obj.get("status")
    if status not in ("ok", "error"):
        raise MalformedFrameError("response status must be 'ok' or 'error'", frame_id)

    result = obj.get("result")
    if result is not None:
        if not _is_number(result) or not math.isfinite(result):
            raise MalformedFrameError("'result' must be a finite number", frame_id)
        result = float(result)

    error_code = obj.get("error_code")
    if error_code is not None:
        if not isinstance(error_code, str):
            raise MalformedFrameError("'error_code' must be a string", frame_id)
        try:
            error_code = ErrorCode(error_code)
        except ValueError:
            raise MalformedFrameError(f"unknown error_code {error_code!r}", frame_id) from None

    message = obj.get("message")
    if message is not None and not isinstance(message, str):
        raise MalformedFrameError("'message' must be a string", frame_id)

    if status == "ok" and error_code is not None:
        raise MalformedFrameError("status=ok forbids error_code", frame_id)
    if status == "error" and error_code is None:
        raise MalformedFrameError("status=error requires error_code", frame_id)
    if status == "error" and result is not None:
        raise MalformedFrameError("status=error forbids result", frame_id)

    return EvalResponse(
        id=rid,
        status=status,
        result=result,
        payload=obj.get("payload"),
        error_code=error_code,
        message=message,
    )


def decode_frames(
    data: bytes,
) -> tuple[list[EvalRequest | EvalResponse | MalformedFrame], bytes]:
    """Decode every complete frame in a buffer.

    Returns (messages, remainder) where remainder is the unconsumed tail
    (a partial header or partial body). Frames that parse incorrectly become
    MalformedFrame placeholders; decoding continues with the next frame. A
    frame whose announced length exceeds the cap raises FrameTooLargeError,
    because the stream cannot be resynchronized past it.
    """
    messages: list[EvalRequest | EvalResponse | MalformedFrame] = []
    offset = 0
    while len(data) - offset >= HEADER_BYTES:
        (length,) = struct.unpack_from(">I", data, offset)
        if length > MAX_FRAME_BYTES:
            raise FrameTooLargeError(f"announced frame of {length} bytes exceeds {MAX_FRAME_BYTES}")
        if len(data) - offset - HEADER_BYTES < length:
            break
        body = data[offset + HEADER_BYTES : offset + HEADER_BYTES + length]
        offset += HEADER_BYTES + length
        try:
            messages.append(parse_message(body))
        except MalformedFrameError as e:
            messages.append(MalformedFrame(reason=e.reason, frame_id=e.frame_id))
    return messages, data[offset:]


def validate_point(
    values: Sequence[Value], expected_dimensions: int, expected_kind: ValueKind
) -> ErrorCode | None:
    """Check a point against a benchmark signature.

    Returns the first applicable error in the fixed priority order
    dimension_mismatch > type_mismatch > value_out_of_range, or None if the
    point is acceptable.
    """
    if len(values) != expected_dimensions:
        return ErrorCode.DIMENSION_MISMATCH
    if any(v.kind is not expected_kind for v in values):
        return ErrorCode.TYPE_MISMATCH
    if any(not v.in_range() for v in values):
        return ErrorCode.VALUE_OUT_OF_RANGE
    return None


def send_frame(sock: socket.socket, payload: bytes) -> None:
    """Frame a message body and write it to a socket."""
    sock.sendall(frame(payload))


def recv_frame(sock: socket.socket) -> bytes | None:
    """Read one complete frame body from a socket.

    Returns None on a clean EOF at a frame boundary. Raises ProtocolError on
    EOF mid-frame and FrameTooLargeError on an oversized announcement.
    """
    header = _recv_exact(sock, HEADER_BYTES)
    if header is None:
        return None
    if len(header) < HEADER_BYTES:
        raise ProtocolError("connection closed mid frame header")
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"announced frame of {length} bytes exceeds {MAX_FRAME_BYTES}")
    body = _recv_exact(sock, length)
    if body is None or len(body) < length:
        raise ProtocolError("connection closed mid frame body")
    return body


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on immediate EOF, short bytes on mid-read EOF."""
    if n == 0:
        return b""
    chunks: list[bytes] = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(min(remaining, 65536))
        if not chunk:
            if not chunks:
                return None
            return b"".join(chunks)
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def force_close(sock: socket.socket) -> None:
    """Close a socket that another thread may be blocked on.

    A bare close() does not wake a thread sitting in recv()/accept() on the
    same socket; shutdown() does, making teardown prompt.
    """
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    try:
        sock.close()
    except OSError:
        pass

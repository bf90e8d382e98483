"""Worker runtime: hosts objective functions behind the wire protocol.

A worker listens on a loopback port (BENCHER_WORKER_PORT when spawned by the
coordinator), accepts framed requests, re-validates every point against its
own benchmark signatures, and evaluates objectives. A raising or non-finite
objective is reported as an `internal` error; the worker itself stays alive.
Requests on one connection are handled sequentially, and evaluations of the
same benchmark are serialized across connections so objectives never need to
be thread-safe.

Run directly to serve the built-in suites:

    python -m bencher.worker --suite bbob --port 50052
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import signal
import socket
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .protocol import (
    ErrorCode,
    EvalRequest,
    EvalResponse,
    MalformedFrameError,
    Method,
    ProtocolError,
    ValueKind,
    error_response,
    force_close,
    ok_response,
    parse_message,
    recv_frame,
    send_frame,
    serialize_message,
    validate_point,
)
from .registry import Direction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchmarkDefinition:
    """Everything a worker needs to host one benchmark."""

    name: str
    dimensions: int
    kind: ValueKind
    objective: Callable[[Sequence[float]], float]
    direction: Direction = Direction.MIN

    def describe_payload(self) -> dict[str, object]:
        return {
            "name": self.name,
            "dimensions": self.dimensions,
            "type": _TYPE_BY_KIND[self.kind],
            "direction": self.direction.value,
        }


_TYPE_BY_KIND = {
    ValueKind.CONTINUOUS: "purely_continuous",
    ValueKind.BINARY: "binary",
    ValueKind.CATEGORICAL: "categorical",
    ValueKind.ORDINAL: "ordinal",
}


def handle_request(
    benchmarks: Mapping[str, BenchmarkDefinition],
    request: EvalRequest,
    locks: Mapping[str, threading.Lock] | None = None,
) -> EvalResponse:
    """Map one request onto a response; never raises."""
    if request.method is Method.HEALTH:
        return ok_response(request.id, payload={"benchmarks": sorted(benchmarks)})
    if request.method is Method.LIST:
        entries = [benchmarks[name].describe_payload() for name in sorted(benchmarks)]
        return ok_response(request.id, payload=entries)

    definition = benchmarks.get(request.benchmark or "")
    if definition is None:
        return error_response(
            request.id,
            ErrorCode.UNKNOWN_BENCHMARK,
            f"no benchmark named {request.benchmark!r} on this worker",
        )
    if request.method is Method.DESCRIBE:
        return ok_response(request.id, payload=definition.describe_payload())

    # evaluate: re-validate even though the coordinator already did.
    code = validate_point(request.values or (), definition.dimensions, definition.kind)
    if code is not None:
        return error_response(request.id, code, f"point rejected: {code.value}")
    point = [v.value for v in request.values or ()]
    lock = locks.get(definition.name) if locks is not None else None
    try:
        if lock is not None:
            with lock:
                result = float(definition.objective(point))
        else:
            result = float(definition.objective(point))
    except Exception as e:  # objective bugs must not kill the worker
        logger.warning("objective %s raised: %s", definition.name, e)
        return error_response(request.id, ErrorCode.INTERNAL, f"objective raised: {e}")
    if not math.isfinite(result):
        return error_response(
            request.id, ErrorCode.INTERNAL, f"objective returned non-finite value {result!r}"
        )
    return ok_response(request.id, result=result)


@dataclass
class WorkerServer:
    """Threaded TCP server hosting a fixed set of benchmark definitions."""

    benchmarks: Mapping[str, BenchmarkDefinition]
    port: int
    host: str = "127.0.0.1"
    _sock: socket.socket | None = None
    _threads: list[threading.Thread] = field(default_factory=list)
    _locks: dict[str, threading.Lock] = field(default_factory=dict)
    _stopping: threading.Event = field(default_factory=threading.Event)
    _conns: set[socket.socket] = field(default_factory=set)
    _conns_lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self) -> None:
        self._locks = {name: threading.Lock() for name in self.benchmarks}

    @property
    def bound_port(self) -> int:
        if self._sock is None:
            raise RuntimeError("server not started")
        return self._sock.getsockname()[1]

    def start(self) -> None:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, self.port))
        sock.listen(64)
        self._sock = sock
        acceptor = threading.Thread(target=self._accept_loop, name="worker-accept", daemon=True)
        acceptor.start()
        self._threads.append(acceptor)
        logger.info("worker serving %d benchmarks on port %d", len(self.benchmarks), self.bound_port)

    def _accept_loop(self) -> None:
        assert self._sock is not None
        while not self._stopping.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return  # listener closed
            with self._conns_lock:
                self._conns.add(conn)
            handler = threading.Thread(
                target=self._serve_connection, args=(conn,), name="worker-conn", daemon=True
            )
            handler.start()
            self._threads.append(handler)

    def _serve_connection(self, conn: socket.socket) -> None:
        try:
            with conn:
                while not self._stopping.is_set():
                    try:
                        body = recv_frame(conn)
                    except ProtocolError:
                        return  # oversized or truncated frame: drop the connection
                    except OSError:
                        return
                    if body is None:
                        return
                    response = self._respond(body)
                    try:
                        send_frame(conn, response)
                    except OSError:
                        return
        finally:
            with self._conns_lock:
                self._conns.discard(conn)

    def _respond(self, body: bytes) -> bytes:
        """Frame body in, response frame body out."""
        try:
            message = parse_message(body)
        except MalformedFrameError as e:
            return serialize_message(
                error_response(e.frame_id, ErrorCode.MALFORMED_REQUEST, e.reason)
            )
        if not isinstance(message, EvalRequest):
            return serialize_message(
                error_response(message.id, ErrorCode.MALFORMED_REQUEST, "expected a request")
            )
        return serialize_message(handle_request(self.benchmarks, message, self._locks))

    def wait(self) -> None:
        """Block until stop() is called (for use as a process main loop)."""
        self._stopping.wait()

    def stop(self) -> None:
        self._stopping.set()
        if self._sock is not None:
            force_close(self._sock)
        with self._conns_lock:
            conns = list(self._conns)
            self._conns.clear()
        for conn in conns:
            force_close(conn)

    def __enter__(self) -> "WorkerServer":
        return self

    def __exit__(self, *exc: object) -> None:
        self.stop()


def serve(
    benchmarks: Iterable[BenchmarkDefinition] | Mapping[str, BenchmarkDefinition],
    port: int,
    host: str = "127.0.0.1",
) -> WorkerServer:
    """Start a worker server on the given loopback port and return it."""
    if isinstance(benchmarks, Mapping):
        table = dict(benchmarks)
    else:
        table = {definition.name: definition for definition in benchmarks}
    server = WorkerServer(benchmarks=table, port=port, host=host)
    server.start()
    return server


def main(argv: Sequence[str] | None = None) -> int:
    from .benchmarks.builtin import suite_definitions

    parser = argparse.ArgumentParser(description="Serve built-in benchmark suites.")
    parser.add_argument("--suite", choices=("bbob", "pbo", "all"), default="all")
    parser.add_argument(
        "--port",
        type=int,
        default=int(os.environ.get("BENCHER_WORKER_PORT", "0")) or None,
        help="listen port (default: BENCHER_WORKER_PORT)",
    )
    args = parser.parse_args(argv)
    if args.port is None:
        parser.error("no port given: pass --port or set BENCHER_WORKER_PORT")

    logging.basicConfig(level=logging.INFO, format="%(name)s %(levelname)s %(message)s")
    server = serve(suite_definitions(args.suite), args.port)
    signal.signal(signal.SIGTERM, lambda *_: server.stop())
    signal.signal(signal.SIGINT, lambda *_: server.stop())
    server.wait()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

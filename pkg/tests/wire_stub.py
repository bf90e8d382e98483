"""Hand-rolled counterpart of the wire format, for tests.

Deliberately imports nothing from the package under test: frames built here
double as an independent check that the service speaks the documented format
(4-byte big-endian length + UTF-8 JSON object) rather than merely its own
dialect.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
from typing import Any, Callable


def alloc_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def pack_body(obj: Any) -> bytes:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def pack_frame(obj: Any) -> bytes:
    body = pack_body(obj)
    return struct.pack(">I", len(body)) + body


def send_obj(sock: socket.socket, obj: Any) -> None:
    sock.sendall(pack_frame(obj))


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame_bytes(sock: socket.socket) -> bytes | None:
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    return _read_exact(sock, length)


def read_frame(sock: socket.socket) -> dict | None:
    body = read_frame_bytes(sock)
    if body is None:
        return None
    return json.loads(body.decode("utf-8"))


def request_once(port: int, obj: Any, timeout: float = 10.0) -> dict:
    """One connection, one request object, one parsed response object."""
    with socket.create_connection(("127.0.0.1", port), timeout=timeout) as conn:
        conn.sendall(pack_frame(obj))
        response = read_frame(conn)
    assert response is not None, "peer closed without answering"
    return response


def request_raw(port: int, frame: bytes, timeout: float = 10.0) -> bytes:
    """Send pre-built frame bytes; return the raw response body bytes."""
    with socket.create_connection(("127.0.0.1", port), timeout=timeout) as conn:
        conn.sendall(frame)
        body = read_frame_bytes(conn)
    assert body is not None, "peer closed without answering"
    return body


def default_behavior(obj: dict) -> dict:
    """Answer like a minimal worker: result = sum of the point's values."""
    method = obj.get("method")
    rid = obj.get("id", "")
    if method == "health":
        return {"id": rid, "status": "ok"}
    if method == "evaluate":
        total = float(sum(v["value"] for v in obj.get("values", [])))
        return {"id": rid, "status": "ok", "result": total}
    if method == "describe":
        return {"id": rid, "status": "ok", "payload": {"name": obj.get("benchmark")}}
    return {"id": rid, "status": "error", "error_code": "malformed_request", "message": "?"}


# behavior may return this sentinel to close the connection without replying
CLOSE = object()


class StubWorker:
    """Scriptable fake worker that counts every frame it receives.

    behavior(request_obj) returns a dict (packed and sent), raw body bytes
    (framed and sent verbatim), None (no reply; the connection stays open),
    or CLOSE (drop the connection).
    """

    def __init__(self, port: int = 0, behavior: Callable[[dict], Any] | None = None):
        self.behavior = behavior or default_behavior
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._stopping = False
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(("127.0.0.1", port))
        self._sock.listen(16)
        self.port = self._sock.getsockname()[1]
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()

    @property
    def request_count(self) -> int:
        with self._lock:
            return len(self.requests)

    def _accept_loop(self) -> None:
        while not self._stopping:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._serve, args=(conn,), daemon=True).start()

    def _serve(self, conn: socket.socket) -> None:
        with conn:
            while not self._stopping:
                try:
                    body = read_frame_bytes(conn)
                except OSError:
                    return
                if body is None:
                    return
                obj = json.loads(body.decode("utf-8"))
                with self._lock:
                    self.requests.append(obj)
                reply = self.behavior(obj)
                if reply is CLOSE:
                    return
                if reply is None:
                    continue
                if isinstance(reply, dict):
                    payload = pack_frame(reply)
                else:
                    payload = struct.pack(">I", len(reply)) + reply
                try:
                    conn.sendall(payload)
                except OSError:
                    return

    def stop(self) -> None:
        self._stopping = True
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "StubWorker":
        return self

    def __exit__(self, *exc: object) -> None:
        self.stop()

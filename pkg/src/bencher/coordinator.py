"""Coordinator: the single externally exposed endpoint of the service.

The coordinator loads a benchmark registry, spawns one worker process per
distinct start_command (workers without one are "plugin" workers, managed
externally), and relays framed evaluate requests to the worker owning the
named benchmark. Points are validated against the registry before any bytes
reach a worker, so an invalid request costs zero worker traffic. Worker
response frames are relayed byte-for-byte, which keeps results bit-exact
end to end.

Spawned workers are supervised: a crash schedules a restart with doubling
backoff (1 s up to a 60 s cap). Five consecutive failed restarts stop the
worker permanently; ten minutes of ready uptime forgive the streak. While a
worker is down its benchmarks answer worker_unavailable.
"""

from __future__ import annotations

import logging
import os
import queue
import socket
import subprocess
import threading
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .protocol import (
    ErrorCode,
    EvalRequest,
    EvalResponse,
    MalformedFrameError,
    Method,
    ProtocolError,
    error_response,
    ok_response,
    force_close,
    parse_message,
    recv_frame,
    send_frame,
    serialize_message,
    validate_point,
)
from .registry import Registry, UnknownBenchmarkError, load_registry_file

logger = logging.getLogger(__name__)

DEFAULT_PORT = 50051
_WORKER_CONNECT_TIMEOUT = 5.0
_PROBE_TIMEOUT = 0.25
_SUPERVISOR_TICK = 0.05


class CoordinatorStartupError(RuntimeError):
    """The coordinator cannot come up (bad config, unbindable port, ...)."""


def default_listen_port() -> int:
    """Listen port from BENCHER_PORT, falling back to 50051."""
    raw = os.environ.get("BENCHER_PORT")
    if raw is None or not raw.strip():
        return DEFAULT_PORT
    try:
        return int(raw)
    except ValueError:
        raise CoordinatorStartupError(f"BENCHER_PORT is not an integer: {raw!r}") from None


class WorkerState(str, Enum):
    STARTING = "starting"
    READY = "ready"
    CRASHED = "crashed"
    STOPPED = "stopped"


@dataclass
class CoordinatorConfig:
    registry_path: str | Path
    listen_port: int | None = None  # None: BENCHER_PORT env, then 50051
    listen_host: str = "127.0.0.1"
    eval_timeout: float = 300.0
    max_inflight_per_worker: int = 1
    restart_backoff_initial: float = 1.0
    restart_backoff_cap: float = 60.0
    max_restarts: int = 5
    backoff_reset_after: float = 600.0
    ready_timeout: float = 30.0
    shutdown_grace: float = 5.0
    terminate_grace: float = 5.0


@dataclass
class WorkerHandle:
    """Coordinator-side lifecycle state of one supervised worker process."""

    port: int
    command: tuple[str, ...]
    state: WorkerState = WorkerState.STARTING
    process: subprocess.Popen | None = None
    restart_count: int = 0  # total restarts ever attempted; monotone
    streak_restarts: int = 0  # restarts in the current crash streak
    generation: int = 0  # bumped on crash/spawn so proxies drop stale connections
    started_at: float = 0.0
    ready_since: float | None = None
    last_health_ok: float | None = None
    next_restart_at: float | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class _PendingReply:
    """One-shot mailbox a connection handler waits on."""

    __slots__ = ("_event", "_response")

    def __init__(self) -> None:
        self._event = threading.Event()
        self._response: bytes | None = None

    def resolve(self, response: bytes) -> None:
        self._response = response
        self._event.set()

    def wait(self) -> bytes:
        self._event.wait()
        assert self._response is not None
        return self._response


class WorkerProxy:
    """FIFO request pipe to one worker port; traffics in frame bodies.

    Each consumer thread owns one persistent connection; with the default
    max_inflight_per_worker=1 there is a single consumer, so a worker never
    sees interleaved frames of two requests and requests leave in arrival
    order. Every submitted request is guaranteed a resolution, including at
    shutdown.
    """

    def __init__(
        self,
        host: str,
        port: int,
        handle: WorkerHandle | None,
        eval_timeout: float,
        inflight: int,
    ) -> None:
        self.port = port
        self._host = host
        self._handle = handle
        self._eval_timeout = eval_timeout
        self._queue: queue.SimpleQueue = queue.SimpleQueue()
        self._stopping = False
        self._conns: list[socket.socket] = []
        self._conns_lock = threading.Lock()
        self._threads = [
            threading.Thread(target=self._run, name=f"proxy-{port}-{i}", daemon=True)
            for i in range(max(1, inflight))
        ]
        for t in self._threads:
            t.start()

    def submit(self, raw_body: bytes, request_id: str) -> _PendingReply:
        reply = _PendingReply()
        if self._stopping:
            reply.resolve(self._error(request_id, ErrorCode.WORKER_UNAVAILABLE, "shutting down"))
        else:
            self._queue.put((raw_body, request_id, reply))
        return reply

    @staticmethod
    def _error(request_id: str, code: ErrorCode, message: str) -> bytes:
        return serialize_message(error_response(request_id, code, message))

    def _unavailable(self, request_id: str, message: str) -> bytes:
        return self._error(request_id, ErrorCode.WORKER_UNAVAILABLE, message)

    def _register(self, conn: socket.socket) -> None:
        with self._conns_lock:
            self._conns.append(conn)

    def _discard(self, conn: socket.socket | None) -> None:
        if conn is None:
            return
        with self._conns_lock:
            if conn in self._conns:
                self._conns.remove(conn)
        try:
            conn.close()
        except OSError:
            pass

    def _connect(self) -> socket.socket:
        conn = socket.create_connection((self._host, self.port), timeout=_WORKER_CONNECT_TIMEOUT)
        conn.settimeout(self._eval_timeout)
        self._register(conn)
        return conn

    def _run(self) -> None:
        conn: socket.socket | None = None
        conn_generation = -1
        while True:
            item = self._queue.get()
            if item is None:
                break
            raw_body, request_id, reply = item

            if self._stopping:
                reply.resolve(self._unavailable(request_id, "shutting down"))
                continue

            generation = 0
            if self._handle is not None:
                with self._handle.lock:
                    state = self._handle.state
                    generation = self._handle.generation
                if state is not WorkerState.READY:
                    reply.resolve(
                        self._unavailable(
                            request_id, f"worker on port {self.port} is {state.value}"
                        )
                    )
                    continue
            if conn is not None and conn_generation != generation:
                self._discard(conn)
                conn = None

            # Send, reconnecting once if a cached connection went stale
            # between requests (the frame was provably never delivered).
            fresh = conn is None
            try:
                if fresh:
                    conn = self._connect()
                    conn_generation = generation
                send_frame(conn, raw_body)
            except OSError:
                self._discard(conn)
                conn = None
                delivered = False
                if not fresh:
                    try:
                        conn = self._connect()
                        conn_generation = generation
                        send_frame(conn, raw_body)
                        delivered = True
                    except OSError:
                        self._discard(conn)
                        conn = None
                if not delivered:
                    reply.resolve(
                        self._unavailable(
                            request_id, f"cannot reach worker on port {self.port}"
                        )
                    )
                    continue

            try:
                response = recv_frame(conn)
                if response is None:
                    raise ProtocolError("worker closed the connection")
            except TimeoutError:
                self._discard(conn)
                conn = None
                reply.resolve(
                    self._error(
                        request_id,
                        ErrorCode.WORKER_TIMEOUT,
                        f"no reply from worker on port {self.port} "
                        f"within {self._eval_timeout:g}s",
                    )
                )
                continue
            except (OSError, ProtocolError):
                self._discard(conn)
                conn = None
                reply.resolve(
                    self._unavailable(
                        request_id, f"worker on port {self.port} dropped the connection"
                    )
                )
                continue
            reply.resolve(response)
        self._discard(conn)

    def stop(self) -> None:
        """Stop consumers; queued and future requests fail fast."""
        self._stopping = True
        with self._conns_lock:
            conns = list(self._conns)
        for conn in conns:  # unblocks consumers stuck in recv
            force_close(conn)
        for _ in self._threads:
            self._queue.put(None)
        for t in self._threads:
            t.join(timeout=5.0)
        while True:
            try:
                item = self._queue.get_nowait()
            except queue.Empty:
                break
            if item is None:
                continue
            _, request_id, reply = item
            reply.resolve(self._unavailable(request_id, "shutting down"))


class Coordinator:
    """Routes framed requests from clients to supervised benchmark workers."""

    def __init__(self, config: CoordinatorConfig) -> None:
        self.config = config
        self.listen_port = (
            config.listen_port if config.listen_port is not None else default_listen_port()
        )
        self.registry: Registry = Registry()
        self.workers: dict[int, WorkerHandle] = {}
        self._proxies: dict[int, WorkerProxy] = {}
        self._sock: socket.socket | None = None
        self._stopping = threading.Event()
        self._shutdown_lock = threading.Lock()
        self._shutdown_done = False
        self._threads: list[threading.Thread] = []
        self._client_threads: set[threading.Thread] = set()
        self._client_conns: set[socket.socket] = set()
        self._client_lock = threading.Lock()

    @property
    def bound_port(self) -> int:
        if self._sock is None:
            raise RuntimeError("coordinator not started")
        return self._sock.getsockname()[1]

    def start(self) -> None:
        """Load the registry, bind the port, spawn workers, begin serving."""
        self.registry = load_registry_file(self.config.registry_path)
        commands = self._group_workers(self.registry)

        if self.listen_port != 0 and self.listen_port in {e.port for e in self.registry}:
            raise CoordinatorStartupError(
                f"listen port {self.listen_port} conflicts with a worker port in the registry"
            )

        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((self.config.listen_host, self.listen_port))
        except OSError as e:
            sock.close()
            raise CoordinatorStartupError(
                f"cannot bind listen port {self.listen_port}: {e}"
            ) from None
        sock.listen(128)
        self._sock = sock

        for port, command in commands.items():
            self.workers[port] = WorkerHandle(port=port, command=command)
        for port in {entry.port for entry in self.registry}:
            self._proxies[port] = WorkerProxy(
                host="127.0.0.1",
                port=port,
                handle=self.workers.get(port),
                eval_timeout=self.config.eval_timeout,
                inflight=self.config.max_inflight_per_worker,
            )
        for handle in self.workers.values():
            self._spawn(handle)

        supervisor = threading.Thread(target=self._supervise, name="supervisor", daemon=True)
        acceptor = threading.Thread(target=self._accept_loop, name="accept", daemon=True)
        self._threads += [supervisor, acceptor]
        supervisor.start()
        acceptor.start()
        logger.info(
            "coordinator serving %d benchmarks on port %d (%d spawned workers)",
            len(self.registry),
            self.bound_port,
            len(self.workers),
        )

    @staticmethod
    def _group_workers(registry: Registry) -> dict[int, tuple[str, ...]]:
        """Map worker port -> start_command, enforcing a 1:1 pairing."""
        commands: dict[int, tuple[str, ...]] = {}
        ports_by_command: dict[tuple[str, ...], int] = {}
        for entry in registry:
            if entry.start_command is None:
                continue
            existing = commands.get(entry.port)
            if existing is not None and existing != entry.start_command:
                raise CoordinatorStartupError(
                    f"port {entry.port} is claimed by two different start_commands"
                )
            owner = ports_by_command.get(entry.start_command)
            if owner is not None and owner != entry.port:
                raise CoordinatorStartupError(
                    f"start_command {list(entry.start_command)} appears on ports "
                    f"{owner} and {entry.port}; one worker process cannot bind both"
                )
            commands[entry.port] = entry.start_command
            ports_by_command[entry.start_command] = entry.port
        return commands

    # ---- supervision ----

    def _spawn(self, handle: WorkerHandle) -> None:
        env = dict(os.environ)
        env["BENCHER_WORKER_PORT"] = str(handle.port)
        now = time.monotonic()
        try:
            process = subprocess.Popen(list(handle.command), env=env, stdin=subprocess.DEVNULL)
        except OSError as e:
            logger.warning("worker on port %d failed to spawn: %s", handle.port, e)
            with handle.lock:
                handle.process = None
                handle.started_at = now
            self._on_worker_exit(handle)
            return
        with handle.lock:
            handle.process = process
            handle.state = WorkerState.STARTING
            handle.started_at = now
            handle.ready_since = None
            handle.next_restart_at = None
            handle.generation += 1
        logger.info("worker on port %d spawned (pid %d)", handle.port, process.pid)

    def _on_worker_exit(self, handle: WorkerHandle) -> None:
        """Process found dead: stop permanently or schedule the next restart.

        streak_restarts already counts the restart that produced the dead
        process (0 for a fresh streak), so it equals the number of
        consecutive failed restarts at this moment.
        """
        config = self.config
        with handle.lock:
            handle.generation += 1
            handle.ready_since = None
            failed_restarts = handle.streak_restarts
            if failed_restarts >= config.max_restarts:
                handle.state = WorkerState.STOPPED
                handle.next_restart_at = None
                logger.error(
                    "worker on port %d: %d consecutive failed restarts, giving up",
                    handle.port,
                    failed_restarts,
                )
                return
            handle.state = WorkerState.CRASHED
            delay = min(
                config.restart_backoff_initial * 2.0**failed_restarts,
                config.restart_backoff_cap,
            )
            handle.next_restart_at = time.monotonic() + delay
        logger.warning(
            "worker on port %d exited; restart %d in %.1fs",
            handle.port,
            handle.restart_count + 1,
            delay,
        )

    def _supervise(self) -> None:
        config = self.config
        while not self._stopping.wait(_SUPERVISOR_TICK):
            for handle in self.workers.values():
                with handle.lock:
                    state = handle.state
                    process = handle.process
                    started_at = handle.started_at
                if state is WorkerState.STOPPED:
                    continue
                now = time.monotonic()

                if state in (WorkerState.STARTING, WorkerState.READY):
                    if process is None or process.poll() is not None:
                        self._on_worker_exit(handle)
                    elif state is WorkerState.STARTING:
                        if self._probe(handle.port):
                            with handle.lock:
                                handle.state = WorkerState.READY
                                handle.ready_since = now
                                handle.last_health_ok = now
                            logger.info("worker on port %d is ready", handle.port)
                        elif now - started_at > config.ready_timeout:
                            logger.warning(
                                "worker on port %d not ready within %.0fs, recycling",
                                handle.port,
                                config.ready_timeout,
                            )
                            self._terminate_process(process)
                            self._on_worker_exit(handle)
                    else:  # READY: forgive the streak after sustained uptime
                        with handle.lock:
                            if (
                                handle.streak_restarts
                                and handle.ready_since is not None
                                and now - handle.ready_since >= config.backoff_reset_after
                            ):
                                handle.streak_restarts = 0
                                logger.info(
                                    "worker on port %d stable for %.0fs, streak forgiven",
                                    handle.port,
                                    config.backoff_reset_after,
                                )
                elif state is WorkerState.CRASHED:
                    with handle.lock:
                        due = handle.next_restart_at is not None and now >= handle.next_restart_at
                        if due:
                            handle.restart_count += 1
                            handle.streak_restarts += 1
                    if due and not self._stopping.is_set():
                        self._spawn(handle)

    def _probe(self, port: int) -> bool:
        """One short-lived health request; True if the worker answers ok."""
        request = EvalRequest(id=f"probe-{uuid.uuid4().hex[:12]}", method=Method.HEALTH)
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=_PROBE_TIMEOUT) as conn:
                conn.settimeout(_PROBE_TIMEOUT)
                send_frame(conn, serialize_message(request))
                body = recv_frame(conn)
        except (OSError, ProtocolError):
            return False
        if body is None:
            return False
        try:
            message = parse_message(body)
        except MalformedFrameError:
            return False
        return isinstance(message, EvalResponse) and message.status == "ok"

    @staticmethod
    def _terminate_process(process: subprocess.Popen | None) -> None:
        if process is None or process.poll() is not None:
            return
        try:
            process.terminate()
        except OSError:
            pass

    def wait_until_ready(self, timeout: float = 30.0) -> bool:
        """Block until every spawned worker is ready; False on timeout/stop."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            states = [h.state for h in self.workers.values()]
            if all(s is WorkerState.READY for s in states):
                return True
            if any(s is WorkerState.STOPPED for s in states) or self._stopping.is_set():
                return False
            time.sleep(_SUPERVISOR_TICK)
        return all(h.state is WorkerState.READY for h in self.workers.values())

    # ---- request path ----

    def _accept_loop(self) -> None:
        assert self._sock is not None
        while not self._stopping.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            handler = threading.Thread(
                target=self._serve_client, args=(conn,), name="client", daemon=True
            )
            with self._client_lock:
                self._client_conns.add(conn)
                self._client_threads.add(handler)
            handler.start()

    def _serve_client(self, conn: socket.socket) -> None:
        try:
            with conn:
                while not self._stopping.is_set():
                    try:
                        body = recv_frame(conn)
                    except (ProtocolError, OSError):
                        return
                    if body is None:
                        return
                    try:
                        send_frame(conn, self._respond(body))
                    except OSError:
                        return
        finally:
            with self._client_lock:
                self._client_conns.discard(conn)
                self._client_threads.discard(threading.current_thread())

    def _respond(self, body: bytes) -> bytes:
        """Map one raw request frame body onto raw response frame body bytes."""
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
        request = message

        if request.method is Method.HEALTH:
            return serialize_message(ok_response(request.id))
        if request.method is Method.LIST:
            payload = [
                self.registry.lookup(name).describe_payload() for name in self.registry.names()
            ]
            return serialize_message(ok_response(request.id, payload=payload))

        try:
            entry = self.registry.lookup(request.benchmark or "")
        except UnknownBenchmarkError:
            return serialize_message(
                error_response(
                    request.id,
                    ErrorCode.UNKNOWN_BENCHMARK,
                    f"no benchmark named {request.benchmark!r}",
                )
            )
        if request.method is Method.DESCRIBE:
            return serialize_message(ok_response(request.id, payload=entry.describe_payload()))

        # evaluate: validate against the registry before any worker traffic.
        code = validate_point(request.values or (), entry.dimensions, entry.value_kind)
        if code is not None:
            return serialize_message(
                error_response(request.id, code, f"point rejected: {code.value}")
            )
        reply = self._proxies[entry.port].submit(body, request.id)
        return self._checked_relay(reply.wait(), request.id)

    def _checked_relay(self, response: bytes, request_id: str) -> bytes:
        """Relay worker bytes verbatim unless they would break the id echo."""
        try:
            parsed = parse_message(response)
        except MalformedFrameError:
            return serialize_message(
                error_response(request_id, ErrorCode.INTERNAL, "worker sent an invalid response")
            )
        if not isinstance(parsed, EvalResponse) or parsed.id != request_id:
            return serialize_message(
                error_response(request_id, ErrorCode.INTERNAL, "worker response id mismatch")
            )
        return response

    # ---- shutdown ----

    def shutdown(self) -> None:
        """Stop serving, drain in-flight work, and reap workers. Idempotent."""
        with self._shutdown_lock:
            if self._shutdown_done:
                return
            self._shutdown_done = True
        self._stopping.set()
        if self._sock is not None:
            force_close(self._sock)

        deadline = time.monotonic() + self.config.shutdown_grace
        with self._client_lock:
            handlers = list(self._client_threads)
        for thread in handlers:
            thread.join(timeout=max(0.0, deadline - time.monotonic()))

        for proxy in self._proxies.values():
            proxy.stop()
        with self._client_lock:
            conns = list(self._client_conns)
            handlers = list(self._client_threads)
        for conn in conns:
            force_close(conn)
        for thread in handlers:
            thread.join(timeout=1.0)

        processes = []
        for handle in self.workers.values():
            with handle.lock:
                handle.state = WorkerState.STOPPED
                if handle.process is not None and handle.process.poll() is None:
                    processes.append(handle.process)
        for process in processes:
            self._terminate_process(process)
        deadline = time.monotonic() + self.config.terminate_grace
        for process in processes:
            try:
                process.wait(timeout=max(0.05, deadline - time.monotonic()))
            except subprocess.TimeoutExpired:
                logger.warning("worker pid %d ignored SIGTERM, killing", process.pid)
                process.kill()
                process.wait(timeout=5.0)

        for thread in self._threads:
            thread.join(timeout=2.0)

    def __enter__(self) -> "Coordinator":
        return self

    def __exit__(self, *exc: object) -> None:
        self.shutdown()


def serve_registry(
    registry_path: str | Path, port: int | None = None, **overrides: object
) -> Coordinator:
    """Start a coordinator for a registry file and return it."""
    config = CoordinatorConfig(registry_path=registry_path, listen_port=port, **overrides)  # type: ignore[arg-type]
    coordinator = Coordinator(config)
    coordinator.start()
    return coordinator

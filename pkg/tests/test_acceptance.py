"""End-to-end acceptance checks, one test per shipping criterion.

Each test prints an ``ACCEPTANCE <criterion>: PASS`` line (outside pytest's
capture) once every assertion in it has held, so a -v run reads as a
checklist. Budgets are asserted, not aspirational.
"""

import itertools
import json
import math
import random
import threading
import time

import pytest

import msggen
import wire_stub
from bencher.benchmarks.continuous import FUNCTIONS as CONTINUOUS_FUNCTIONS
from bencher.benchmarks.continuous import (
    EVEN_FUNCTIONS,
    ContinuousBenchmark,
    optimum_unit_point,
)
from bencher.benchmarks.discrete import DiscreteBenchmark
from bencher.cli import main as cli_main
from bencher.client import Client, ClientConfig
from bencher.coordinator import WorkerState, serve_registry
from bencher.protocol import Value, ValueKind, decode_frames, encode_frame
from bencher.registry import BenchmarkType, Direction, RegistryError, load_registry

from test_discrete import EXHAUSTIVE_SIZE, ORACLES


def announce(capsys, criterion):
    with capsys.disabled():
        print(f"ACCEPTANCE {criterion}: PASS")


def test_protocol_round_trip_storm(capsys):
    """10k random messages survive encode -> rechunked decode bit-exactly."""
    started = time.monotonic()
    rng = random.Random(0xBEEF)
    messages = [msggen.random_message(rng) for _ in range(10_000)]
    stream = b"".join(encode_frame(message) for message in messages)

    decoded = []
    buffer = b""
    position = 0
    while position < len(stream):
        step = rng.randint(1, 64 * 1024)
        buffer += stream[position : position + step]
        position += step
        parsed, buffer = decode_frames(buffer)
        decoded.extend(parsed)

    assert buffer == b""
    assert decoded == messages
    assert b"".join(encode_frame(message) for message in decoded) == stream
    elapsed = time.monotonic() - started
    assert elapsed < 10.0, f"round-trip storm took {elapsed:.1f}s"
    announce(capsys, "protocol round-trip")


def test_registry_contract(capsys):
    """The documented registry example parses exactly; junk is refused."""
    example = """
    {
      "lasso-dna": {
        "port": 50053,
        "dimensions": 180,
        "type": "purely_continuous",
        "direction": "min",
        "start_command": ["python3", "-m", "lasso_worker", "--variant", "dna"]
      }
    }
    """
    registry = load_registry(example)
    entry = registry.lookup("lasso-dna")
    assert entry.port == 50053
    assert entry.dimensions == 180
    assert entry.type is BenchmarkType.PURELY_CONTINUOUS
    assert entry.direction is Direction.MIN
    assert entry.start_command == ("python3", "-m", "lasso_worker", "--variant", "dna")

    rejected = [
        '{"Bad Name": {"port": 2000, "dimensions": 3, "type": "binary"}}',
        '{"a": {"port": 80, "dimensions": 3, "type": "binary"}}',
        '{"a": {"port": 2000, "dimensions": 3, "type": "integer"}}',
        '{"a": {"dimensions": 3, "type": "binary"}}',
        '{"a": {"port": 2000, "dimensions": 3, "type": "categorical"}}',
        '{"a": {"port": 1, "dimensions": 3, "type": "binary"},'
        ' "a": {"port": 2000, "dimensions": 3, "type": "binary"}}',
    ]
    for text in rejected:
        with pytest.raises(RegistryError):
            load_registry(text)
    announce(capsys, "registry contract")


def test_benchmark_functions_against_oracles(capsys):
    """Exhaustive discrete sweeps and continuous optima/global properties."""
    started = time.monotonic()

    # every bitstring function, every input of its reference size
    for function_id, oracle in sorted(ORACLES.items()):
        size = EXHAUSTIVE_SIZE[function_id]
        bench = DiscreteBenchmark(function_id, size)
        for bits in itertools.product((0, 1), repeat=size):
            assert bench.evaluate(list(bits)) == oracle(list(bits))

    # a 4x4 board has no placement better than 4 non-attacking queens
    board = DiscreteBenchmark("nqueens", 16)
    best = max(board.evaluate(list(bits)) for bits in itertools.product((0, 1), repeat=16))
    assert best == 4.0

    rng = random.Random(0xACCE55)
    for function_id in sorted(CONTINUOUS_FUNCTIONS):
        bench = ContinuousBenchmark(function_id, 10)
        # the documented optimum is optimal to within 1e-12
        assert abs(bench.evaluate(optimum_unit_point(function_id, 10))) <= 1e-12
        # and no sampled point beats zero anywhere
        for _ in range(10_000):
            value = bench.evaluate([rng.random() for _ in range(10)])
            assert math.isfinite(value) and value >= 0.0

    for function_id in EVEN_FUNCTIONS:
        bench = ContinuousBenchmark(function_id, 10)
        for _ in range(100):
            u = [rng.random() for _ in range(10)]
            mirrored = [1.0 - coord for coord in u]
            assert bench.evaluate(u) == pytest.approx(
                bench.evaluate(mirrored), rel=1e-9, abs=1e-9
            )

    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"oracle sweep took {elapsed:.1f}s"
    announce(capsys, "benchmark functions")


def test_full_service_round_trip(builtin_stack, monkeypatch, capsys):
    """Coordinator + spawned workers serve all 16 built-ins end to end."""
    started = time.monotonic()
    monkeypatch.delenv("BENCHER_HOST", raising=False)
    monkeypatch.setenv("BENCHER_PORT", str(builtin_stack.bound_port))

    with Client() as client:
        rows = client.list_benchmarks()
        assert len(rows) == 16
        ones = [Value(ValueKind.BINARY, 1)] * 64
        assert client.evaluate_point("pbo-onemax", ones) == 64.0
        center = [Value(ValueKind.CONTINUOUS, 0.5)] * 10
        assert client.evaluate_point("bbob-sphere", center) == 0.0

    assert cli_main(["smoke"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 16
    assert all(" OK " in line for line in lines)

    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"service round trip took {elapsed:.1f}s"
    announce(capsys, "service round-trip")


def test_validation_and_concurrent_isolation(tmp_path, capsys):
    """Bad points cost zero worker traffic; 100 parallel callers stay isolated."""
    started = time.monotonic()
    with wire_stub.StubWorker() as stub:
        registry_path = tmp_path / "registry.json"
        registry_path.write_text(
            json.dumps(
                {
                    "heavy-sim": {
                        "port": stub.port,
                        "dimensions": 124,
                        "type": "purely_continuous",
                    }
                }
            )
        )
        with serve_registry(registry_path, port=0) as coordinator:
            # one coordinate short: rejected before any worker traffic
            short = [{"type": "continuous", "value": 0.5}] * 123
            reply = wire_stub.request_once(
                coordinator.bound_port,
                {
                    "id": "reject-me",
                    "method": "evaluate",
                    "benchmark": "heavy-sim",
                    "values": short,
                },
            )
            assert reply["status"] == "error"
            assert reply["error_code"] == "dimension_mismatch"
            assert reply["id"] == "reject-me"
            assert stub.request_count == 0

            # 100 concurrent callers each get the reply carrying their id
            point = [{"type": "continuous", "value": 0.5}] * 124
            failures = []

            def one_call(i):
                try:
                    response = wire_stub.request_once(
                        coordinator.bound_port,
                        {
                            "id": f"caller-{i}",
                            "method": "evaluate",
                            "benchmark": "heavy-sim",
                            "values": point,
                        },
                        timeout=30.0,
                    )
                    assert response["id"] == f"caller-{i}", response
                    assert response["result"] == 62.0
                except Exception as exc:  # noqa: BLE001 - surfaced below
                    failures.append((i, exc))

            threads = [threading.Thread(target=one_call, args=(i,)) for i in range(100)]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join()
            assert failures == []
            assert stub.request_count == 100

    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"validation/concurrency took {elapsed:.1f}s"
    announce(capsys, "validation and isolation")


def test_supervision_lifecycle(tmp_path, capsys):
    """Default-parameter supervision: restart with backoff, then stop for good."""
    import sys as _sys

    started = time.monotonic()
    registry_path = tmp_path / "registry.json"
    registry_path.write_text(
        json.dumps(
            {
                "pbo-onemax": {
                    "port": 50233,
                    "dimensions": 64,
                    "type": "binary",
                    "direction": "max",
                    "start_command": [
                        _sys.executable,
                        "-m",
                        "bencher.worker",
                        "--suite",
                        "pbo",
                    ],
                }
            }
        )
    )
    point = [{"type": "binary", "value": 1}] * 64

    def evaluate(coordinator, request_id):
        return wire_stub.request_once(
            coordinator.bound_port,
            {
                "id": request_id,
                "method": "evaluate",
                "benchmark": "pbo-onemax",
                "values": point,
            },
            timeout=30.0,
        )

    with serve_registry(registry_path, port=0) as coordinator:
        assert coordinator.wait_until_ready(30)
        handle = coordinator.workers[50233]
        assert evaluate(coordinator, "warm")["result"] == 64.0

        # crash-kill the worker repeatedly; each restart must come back up,
        # until the streak exhausts the restart budget and the worker stops
        kills = 0
        while handle.state is not WorkerState.STOPPED:
            assert kills <= coordinator.config.max_restarts + 1, "no permanent stop"
            assert handle.process is not None
            restarts_before = handle.restart_count
            handle.process.kill()
            kills += 1
            # wait until the supervisor either brought a fresh worker up
            # (restart_count moved and it probed ready) or gave up for good
            deadline = time.monotonic() + 60
            while time.monotonic() < deadline:
                if handle.state is WorkerState.STOPPED:
                    break
                if handle.restart_count > restarts_before and handle.state is WorkerState.READY:
                    break
                time.sleep(0.05)
            if handle.state is WorkerState.READY:
                assert evaluate(coordinator, f"alive-{kills}")["result"] == 64.0

        # exactly the budgeted number of restarts were attempted
        assert kills == coordinator.config.max_restarts + 1
        assert handle.restart_count == coordinator.config.max_restarts
        reply = evaluate(coordinator, "after-stop")
        assert reply["status"] == "error"
        assert reply["error_code"] == "worker_unavailable"
        health = wire_stub.request_once(
            coordinator.bound_port, {"id": "h", "method": "health"}
        )
        assert health["status"] == "ok"

    elapsed = time.monotonic() - started
    assert elapsed < 120.0, f"supervision lifecycle took {elapsed:.1f}s"
    announce(capsys, "supervision lifecycle")

"""Client behavior against real service processes (reached via TCP only)."""

import json
import socket
import time

import pytest

from bencher.coordinator import serve_registry
from bencher.protocol import ValueKind
from bencher.registry import Direction
from bencher.worker import BenchmarkDefinition
from bencher.worker import serve as serve_worker
from bencherclient import (
    BencherClient,
    ConnectionFailedError,
    DimensionMismatchError,
    InternalServiceError,
    MalformedRequestError,
    TypeMismatchError,
    UnknownBenchmarkError,
    Value,
    ValueOutOfRangeError,
    ValueType,
    WorkerTimeoutError,
    WorkerUnavailableError,
)


def free_port() -> int:
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        return probe.getsockname()[1]


def bits(*values):
    return [Value(ValueType.BINARY, v) for v in values]


@pytest.fixture(scope="module")
def worker():
    def slow(values):
        time.sleep(1.0)
        return 1.0

    def broken(values):
        raise RuntimeError("boom")

    definitions = [
        BenchmarkDefinition(
            name="sum-bits",
            dimensions=4,
            kind=ValueKind.BINARY,
            objective=lambda values: float(sum(values)),
            direction=Direction.MAX,
        ),
        BenchmarkDefinition(name="slow", dimensions=1, kind=ValueKind.BINARY, objective=slow),
        BenchmarkDefinition(name="broken", dimensions=1, kind=ValueKind.BINARY, objective=broken),
    ]
    with serve_worker(definitions, port=0) as server:
        yield server


@pytest.fixture()
def client(worker):
    with BencherClient("127.0.0.1", worker.bound_port, connect_retries=0) as c:
        yield c


def test_evaluate_point(client):
    assert client.evaluate_point("sum-bits", bits(1, 0, 1, 1)) == 3.0


def test_describe(client):
    assert client.describe("sum-bits") == {
        "name": "sum-bits",
        "dimensions": 4,
        "type": "binary",
        "direction": "max",
    }


def test_list_benchmarks(client):
    rows = client.list_benchmarks()
    assert [row.name for row in rows] == ["broken", "slow", "sum-bits"]
    assert rows[-1].dimensions == 4
    assert rows[-1].type == "binary"
    assert rows[-1].value_type is ValueType.BINARY
    assert rows[-1].direction == "max"


def test_health(client):
    assert client.health() is True


def test_health_false_when_unreachable():
    with BencherClient("127.0.0.1", free_port(), connect_retries=0) as client:
        assert client.health() is False


def test_unknown_benchmark(client):
    with pytest.raises(UnknownBenchmarkError) as excinfo:
        client.evaluate_point("ghost", bits(1))
    assert excinfo.value.benchmark == "ghost"


def test_dimension_mismatch(client):
    with pytest.raises(DimensionMismatchError):
        client.evaluate_point("sum-bits", bits(1, 0))


def test_type_mismatch(client):
    point = [Value(ValueType.CONTINUOUS, 0.5)] * 4
    with pytest.raises(TypeMismatchError):
        client.evaluate_point("sum-bits", point)


def test_value_out_of_range(client):
    with pytest.raises(ValueOutOfRangeError):
        client.evaluate_point("sum-bits", bits(1, 0, 1, 7))


def test_internal_error_from_broken_objective(client):
    with pytest.raises(InternalServiceError):
        client.evaluate_point("broken", bits(1))


def test_malformed_request_mapping(client):
    response = client._call("teleport")
    assert response["error_code"] == "malformed_request"
    with pytest.raises(MalformedRequestError):
        client._raise_on_error(response, None)


def test_timeout_raises_worker_timeout(worker):
    with BencherClient(
        "127.0.0.1", worker.bound_port, eval_timeout=0.25, connect_retries=0
    ) as client:
        with pytest.raises(WorkerTimeoutError):
            client.evaluate_point("slow", bits(1))


def test_per_call_timeout_wins(worker):
    with BencherClient(
        "127.0.0.1", worker.bound_port, eval_timeout=0.25, connect_retries=0
    ) as client:
        assert client.evaluate_point("slow", bits(1), timeout=5.0) == 1.0


def test_worker_unavailable_through_coordinator(tmp_path):
    registry = tmp_path / "registry.json"
    registry.write_text(
        json.dumps({"offline": {"port": free_port(), "dimensions": 1, "type": "binary"}})
    )
    with serve_registry(registry, port=0) as coordinator:
        with BencherClient("127.0.0.1", coordinator.bound_port, connect_retries=0) as client:
            with pytest.raises(WorkerUnavailableError):
                client.evaluate_point("offline", bits(1))


def test_unreachable_coordinator_raises_connection_failed():
    with BencherClient(
        "127.0.0.1", free_port(), connect_retries=1, retry_spacing=0.05
    ) as client:
        with pytest.raises(ConnectionFailedError):
            client.evaluate_point("x", bits(1))


def test_client_survives_service_errors(client):
    # errors leave the connection usable; the next call succeeds
    with pytest.raises(DimensionMismatchError):
        client.evaluate_point("sum-bits", bits(1))
    assert client.evaluate_point("sum-bits", bits(1, 1, 1, 1)) == 4.0


def test_environment_configuration(monkeypatch):
    monkeypatch.setenv("BENCHER_HOST", "192.0.2.7")
    monkeypatch.setenv("BENCHER_PORT", "50222")
    client = BencherClient()
    assert client.host == "192.0.2.7"
    assert client.port == 50222
    monkeypatch.setenv("BENCHER_PORT", "junk")
    with pytest.raises(ValueError):
        BencherClient()
    # explicit arguments beat the environment
    client = BencherClient("127.0.0.1", 50333)
    assert (client.host, client.port) == ("127.0.0.1", 50333)


def test_recovers_after_peer_restart(tmp_path):
    definition = BenchmarkDefinition(
        name="one", dimensions=1, kind=ValueKind.BINARY, objective=lambda v: 1.0
    )
    first = serve_worker([definition], port=0)
    port = first.bound_port
    client = BencherClient("127.0.0.1", port, connect_retries=3, retry_spacing=0.1)
    try:
        assert client.evaluate_point("one", bits(1)) == 1.0
        first.stop()
        second = serve_worker([definition], port=port)
        try:
            # The cached connection died with the first server. The call that
            # discovers this may raise (a request whose connection breaks after
            # send is never resent, since its fate is unknown) or may succeed
            # via the safe resend-on-send-failure path; either way the dead
            # socket is dropped and the client is usable again immediately.
            try:
                value = client.evaluate_point("one", bits(1))
            except ConnectionFailedError:
                value = client.evaluate_point("one", bits(1))
            assert value == 1.0
            assert client.health() is True
        finally:
            second.stop()
    finally:
        client.close()
        first.stop()

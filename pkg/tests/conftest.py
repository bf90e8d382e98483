import pytest

from bencher.benchmarks.builtin import write_builtin_registry
from bencher.coordinator import Coordinator, CoordinatorConfig


@pytest.fixture(scope="module")
def builtin_stack(tmp_path_factory):
    """A coordinator serving the full built-in registry with live workers."""
    registry_path = tmp_path_factory.mktemp("registry") / "registry.json"
    write_builtin_registry(registry_path)
    coordinator = Coordinator(CoordinatorConfig(registry_path=registry_path, listen_port=0))
    coordinator.start()
    assert coordinator.wait_until_ready(timeout=30.0), "built-in workers never became ready"
    yield coordinator
    coordinator.shutdown()

"""Command-line interface: serve, list, evaluate, and smoke-test benchmarks.

Exit codes: 0 success, 1 evaluation/smoke failure, 2 configuration failure
(unreadable or invalid registry, unbindable port, bad flags).

    bencher init-registry --out registry.json
    bencher serve --registry registry.json --port 50051
    bencher list
    bencher eval --benchmark bbob-sphere --center
    bencher eval --benchmark pbo-onemax --point 1,0,1,...
    bencher smoke --registry registry.json

Client-side commands honor BENCHER_HOST / BENCHER_PORT.
"""

from __future__ import annotations

import argparse
import logging
import signal
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from .benchmarks.builtin import write_builtin_registry
from .client import BenchmarkInfo, Client, ClientConfig, ClientError, EvaluationError
from .coordinator import Coordinator, CoordinatorConfig, CoordinatorStartupError
from .protocol import ProtocolError, Value, ValueKind
from .registry import RegistryError, load_registry_file

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

SMOKE_CONCURRENCY = 8


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bencher", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run a coordinator for a registry")
    serve.add_argument("--registry", required=True, help="path to the registry JSON")
    serve.add_argument("--port", type=int, default=None, help="listen port (default: BENCHER_PORT or 50051)")

    eval_cmd = sub.add_parser("eval", help="evaluate one point")
    eval_cmd.add_argument("--benchmark", required=True)
    point = eval_cmd.add_mutually_exclusive_group(required=True)
    point.add_argument("--point", help="comma-separated coordinates")
    point.add_argument(
        "--center",
        action="store_true",
        help="use the canonical point (0.5 everywhere for continuous, zeros otherwise)",
    )

    sub.add_parser("list", help="list benchmarks served by the coordinator")

    smoke = sub.add_parser("smoke", help="evaluate every benchmark once at its canonical point")
    smoke.add_argument(
        "--registry",
        default=None,
        help="serve this registry on an ephemeral port for the duration of the run "
        "(default: target BENCHER_HOST/BENCHER_PORT)",
    )

    init = sub.add_parser("init-registry", help="write the built-in benchmark registry")
    init.add_argument("--out", default="benchmark-registry.json", help="output path")
    return parser


def canonical_point(kind: ValueKind, dimensions: int) -> list[Value]:
    """The point smoke/eval --center uses: mid-cube or all zeros."""
    if kind is ValueKind.CONTINUOUS:
        return [Value(kind, 0.5)] * dimensions
    return [Value(kind, 0)] * dimensions


def _parse_point(text: str, kind: ValueKind) -> list[Value]:
    values = []
    for part in text.split(","):
        part = part.strip()
        try:
            number = float(part)
        except ValueError:
            raise ValueError(f"not a number: {part!r}") from None
        if kind is not ValueKind.CONTINUOUS and number.is_integer():
            values.append(Value(kind, int(number)))
        else:
            values.append(Value(kind, number))
    return values


def cmd_serve(args: argparse.Namespace) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s %(levelname)s %(message)s")
    config = CoordinatorConfig(registry_path=args.registry, listen_port=args.port)
    coordinator = Coordinator(config)
    try:
        coordinator.start()
    except (RegistryError, CoordinatorStartupError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    print(
        f"listening on {coordinator.config.listen_host}:{coordinator.bound_port} "
        f"({len(coordinator.registry)} benchmarks)",
        file=sys.stderr,
        flush=True,
    )
    stop.wait()
    coordinator.shutdown()
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        client = Client()
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    with client:
        try:
            meta = client.describe(args.benchmark)
            kind = {
                "purely_continuous": ValueKind.CONTINUOUS,
                "binary": ValueKind.BINARY,
                "categorical": ValueKind.CATEGORICAL,
                "ordinal": ValueKind.ORDINAL,
            }[meta["type"]]
            if args.center:
                values = canonical_point(kind, int(meta["dimensions"]))
            else:
                values = _parse_point(args.point, kind)
            result = client.evaluate_point(args.benchmark, values)
        except EvaluationError as e:
            print(f"{e.code.value}: {e.message}", file=sys.stderr)
            return EXIT_FAILURE
        except (ClientError, ProtocolError, ValueError, KeyError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_FAILURE
    print(result)
    return EXIT_OK


def cmd_list(args: argparse.Namespace) -> int:
    try:
        with Client() as client:
            rows = client.list_benchmarks()
    except ClientError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for info in rows:
        print(f"{info.name} {info.dimensions} {info.type.value} {info.direction.value}")
    return EXIT_OK


def _smoke_one(config: ClientConfig, info: BenchmarkInfo) -> tuple[str, str]:
    """Evaluate one benchmark at its canonical point; returns (name, line)."""
    try:
        with Client(config) as client:
            value = client.evaluate_point(
                info.name, canonical_point(info.value_kind, info.dimensions)
            )
    except EvaluationError as e:
        return info.name, f"{info.name} FAIL {e.code.value}"
    except ClientError:
        return info.name, f"{info.name} FAIL transport"
    return info.name, f"{info.name} OK {value}"


def cmd_smoke(args: argparse.Namespace) -> int:
    embedded: Coordinator | None = None
    if args.registry is not None:
        try:
            load_registry_file(args.registry)  # fail fast with exit 2 on bad config
            config = CoordinatorConfig(registry_path=args.registry, listen_port=0)
            embedded = Coordinator(config)
            embedded.start()
        except (RegistryError, CoordinatorStartupError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        embedded.wait_until_ready(timeout=30.0)
        client_config = ClientConfig(host="127.0.0.1", port=embedded.bound_port)
    else:
        try:
            client_config = ClientConfig()
        except ValueError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG

    try:
        with Client(client_config) as client:
            rows = client.list_benchmarks()
        lines = []
        with ThreadPoolExecutor(max_workers=min(SMOKE_CONCURRENCY, max(1, len(rows)))) as pool:
            for _, line in pool.map(lambda info: _smoke_one(client_config, info), rows):
                lines.append(line)
    except ClientError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    finally:
        if embedded is not None:
            embedded.shutdown()

    for line in sorted(lines):
        print(line)
    return EXIT_OK if all(" OK " in line for line in lines) else EXIT_FAILURE


def cmd_init_registry(args: argparse.Namespace) -> int:
    try:
        registry = write_builtin_registry(args.out)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {len(registry)} benchmarks to {args.out}", file=sys.stderr)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad flags, matching the config-failure code
        return int(e.code or 0)
    handlers = {
        "serve": cmd_serve,
        "eval": cmd_eval,
        "list": cmd_list,
        "smoke": cmd_smoke,
        "init-registry": cmd_init_registry,
    }
    return handlers[args.command](args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

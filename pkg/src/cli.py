"""
Command-line entry point: bench, daemon-pass, serve and gen-trace.

Exit codes: 0 success, 1 runtime failure, 2 validation failure.
"""

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, ValidationError

from .bench.report import compare_report, format_table, write_report
from .bench.runner import run_scenario
from .config.settings import CliConfig, configure_logging, env_seed, file_sets_seed
from .core.errors import MetadataFormatError, PolicyViolationError, RedynisError
from .core.model import KeyMetadata, OwnershipPolicy, check_policy
from .daemon.placement import placement_pass
from .sim.cluster import Scenario, node_ids
from .sim.clock import WallClock
from .sim.workload import generate, read_trace, write_trace

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVALID = 2

# flag dest -> (config section, field alias)
BENCH_FLAGS = {
    "nodes": ("sim", "nodeCount"),
    "remote_latency_ms": ("sim", "remoteLatencyMillis"),
    "serializer": ("sim", "masterPropagator"),
    "streams_per_node": ("sim", "streamsPerNode"),
    "max_value_bytes": ("sim", "maxValueBytes"),
    "requests": ("workload", "totalRequests"),
    "read_pct": ("workload", "readPercent"),
    "distribution": ("workload", "distribution"),
    "keys": ("workload", "keyCount"),
    "hot_fraction": ("workload", "hotFraction"),
    "hot_access_fraction": ("workload", "hotAccessFraction"),
    "zipf_exponent": ("workload", "zipfExponent"),
    "value_size": ("workload", "valueSizeBytes"),
    "coefficient": ("policy", "coefficient"),
    "expiry_ms": ("policy", "expiryMillis"),
    "daemon_interval_ms": ("policy", "daemonIntervalMillis"),
    "iterations": ("bench", "iterations"),
    "service_cost_ms": ("bench", "serviceCostMillis"),
    "converged_fraction": ("bench", "convergedFraction"),
}


class SnapshotLine(BaseModel):
    model_config = ConfigDict(extra="forbid")

    key: str
    metadata: Dict[str, Any]


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _validation_message(error: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in detail['loc']) or 'config'}: {detail['msg']}" for detail in error.errors()
    )


def build_config(args: argparse.Namespace, flag_map: Dict[str, tuple]) -> CliConfig:
    """defaults < config file < REDYNIS_SEED < flags, re-validated after the merge"""
    config = CliConfig.load_from_file(args.config) if args.config else CliConfig()

    overrides: Dict[str, Any] = {}
    seed = getattr(args, "seed", None)
    if seed is None and not file_sets_seed(args.config):
        seed = env_seed()
    if seed is not None:
        overrides.setdefault("sim", {})["seed"] = seed
        overrides.setdefault("workload", {})["seed"] = seed

    for dest, (section, alias) in flag_map.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides.setdefault(section, {})[alias] = value

    scenarios = getattr(args, "scenario", None)
    if scenarios:
        if "all" in scenarios:
            overrides["scenarios"] = [scenario.value for scenario in Scenario]
        else:
            overrides["scenarios"] = [Scenario.parse(name).value for name in scenarios]
    if getattr(args, "report", None):
        overrides["report"] = args.report
    if getattr(args, "trace", None):
        overrides["trace"] = args.trace
    return config.merge(overrides)


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        config = build_config(args, BENCH_FLAGS)
        requests = None
        if config.trace_path:
            requests = read_trace(config.trace_path, config.workload.value_size_bytes)
    except ValidationError as e:
        return _fail(EXIT_INVALID, _validation_message(e))
    except (ValueError, OSError) as e:
        return _fail(EXIT_INVALID, str(e))

    policy = config.effective_policy()
    try:
        reports = [
            run_scenario(config.sim, scenario, config.workload, policy=policy, settings=config.bench, requests=requests)
            for scenario in config.scenarios
        ]
        for report in reports:
            report.config = config.to_dict()
        comparisons = compare_report(reports) if len(reports) >= 2 else []
    except RedynisError as e:
        return _fail(EXIT_RUNTIME, str(e))
    except Exception as e:
        logger.exception("Benchmark failed")
        return _fail(EXIT_RUNTIME, str(e))

    print(format_table(reports, comparisons))
    if config.report_path:
        try:
            write_report(config.report_path, reports, comparisons, config.to_dict())
        except OSError as e:
            return _fail(EXIT_RUNTIME, f"could not write report: {e}")
        print(f"report written to {config.report_path}")
    return EXIT_OK


def load_snapshot(path: str) -> List[tuple]:
    """Read `{"key": ..., "metadata": {...}}` JSON lines"""
    snapshot = []
    with open(path, "rb") as f:
        for line_number, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise MetadataFormatError(f"not valid UTF-8: {e.reason}", line_number) from e
            if not line.strip():
                continue
            try:
                entry = SnapshotLine.model_validate_json(line)
                snapshot.append((entry.key, KeyMetadata.from_dict(entry.metadata)))
            except ValidationError as e:
                raise MetadataFormatError(_validation_message(e), line_number) from e
            except MetadataFormatError as e:
                raise MetadataFormatError(str(e), line_number) from e
    return snapshot


def cmd_daemon_pass(args: argparse.Namespace) -> int:
    if args.nodes < 1:
        return _fail(EXIT_INVALID, "--nodes must be at least 1")
    try:
        fields = {}
        if args.coefficient is not None:
            fields["coefficient"] = args.coefficient
        else:
            fields["coefficient"] = min(OwnershipPolicy().coefficient, 1 / args.nodes)
        if args.expiry_ms is not None:
            fields["expiry_millis"] = args.expiry_ms
        policy = OwnershipPolicy(**fields)
        check_policy(policy, args.nodes).raise_for_violation()
        snapshot = load_snapshot(args.metadata)
    except ValidationError as e:
        return _fail(EXIT_INVALID, _validation_message(e))
    except (PolicyViolationError, MetadataFormatError) as e:
        return _fail(EXIT_INVALID, str(e))
    except OSError as e:
        return _fail(EXIT_INVALID, f"cannot read metadata: {e}")

    now = args.now if args.now is not None else WallClock().now()
    plan = placement_pass(snapshot, policy, now)
    print(json.dumps(plan.to_dict(), indent=2))
    return EXIT_OK


def parse_peers(raw: str) -> Dict[str, str]:
    """`node-1=http://host:8001,node-2=...` in cluster order"""
    peers = {}
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        node, sep, url = item.partition("=")
        if not sep or not node or not url:
            raise ValueError(f"peer entry {item!r} must look like node-id=http://host:port")
        peers[node.strip()] = url.strip()
    if not peers:
        raise ValueError("--peers names no nodes")
    return peers


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .servers.node_server import build_http_node

    try:
        peers = parse_peers(args.peers)
        if args.node_id not in peers:
            raise ValueError(f"--node-id {args.node_id} is not listed in --peers")
        serializer = args.serializer or next(iter(peers))
        if serializer not in peers:
            raise ValueError(f"--serializer {serializer} is not listed in --peers")
        fields = {"coefficient": min(OwnershipPolicy().coefficient, 1 / len(peers))}
        if args.coefficient is not None:
            fields["coefficient"] = args.coefficient
        if args.daemon_interval_ms is not None:
            fields["daemon_interval_millis"] = args.daemon_interval_ms
        if args.expiry_ms is not None:
            fields["expiry_millis"] = args.expiry_ms
        policy = OwnershipPolicy(**fields)
        check_policy(policy, len(peers)).raise_for_violation()
    except ValidationError as e:
        return _fail(EXIT_INVALID, _validation_message(e))
    except ValueError as e:
        return _fail(EXIT_INVALID, str(e))

    app = build_http_node(
        node_id=args.node_id,
        peers=peers,
        serializer=serializer,
        policy=policy,
        remote_latency_millis=args.remote_latency_ms,
        inject_latency=args.inject_latency,
        max_value_bytes=args.max_value_bytes,
        with_daemon=args.run_daemon,
    )
    logger.info(f"Serving {args.node_id} on {args.host}:{args.port}")
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level=args.log_level.lower())
    except (OSError, SystemExit) as e:
        return _fail(EXIT_RUNTIME, f"server stopped: {e}")
    return EXIT_OK


def cmd_gen_trace(args: argparse.Namespace) -> int:
    try:
        config = build_config(args, {k: v for k, v in BENCH_FLAGS.items() if v[0] in ("workload", "sim")})
        nodes = node_ids(config.sim.node_count)
        origins = nodes if len(nodes) == 1 else nodes[:-1]
        workload = config.workload.model_copy(update={"origin_nodes": origins})
    except ValidationError as e:
        return _fail(EXIT_INVALID, _validation_message(e))
    except (ValueError, OSError) as e:
        return _fail(EXIT_INVALID, str(e))

    try:
        written = write_trace(generate(workload), args.output)
    except OSError as e:
        return _fail(EXIT_RUNTIME, f"could not write trace: {e}")
    print(f"wrote {written} requests ({workload.read_count} reads) to {args.output}")
    return EXIT_OK


def _add_workload_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON or YAML configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--nodes", type=int)
    parser.add_argument("--requests", type=int)
    parser.add_argument("--read-pct", type=int)
    parser.add_argument("--distribution", choices=["uniform", "skewed", "zipfian"])
    parser.add_argument("--keys", type=int)
    parser.add_argument("--hot-fraction", type=float)
    parser.add_argument("--hot-access-fraction", type=float)
    parser.add_argument("--zipf-exponent", type=float)
    parser.add_argument("--value-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="redynis", description="Traffic-aware repartitioning for a key-value store")
    subparsers = parser.add_subparsers(dest="command", required=True)

    bench = subparsers.add_parser("bench", help="Run Local/Remote/Optimized scenarios on the simulated cluster")
    _add_workload_flags(bench)
    bench.add_argument("--scenario", action="append", help="local, remote, optimized or all (repeatable)")
    bench.add_argument("--coefficient", type=float)
    bench.add_argument("--remote-latency-ms", type=int)
    bench.add_argument("--serializer")
    bench.add_argument("--streams-per-node", type=int)
    bench.add_argument("--max-value-bytes", type=int)
    bench.add_argument("--expiry-ms", type=int)
    bench.add_argument("--daemon-interval-ms", type=int)
    bench.add_argument("--iterations", type=int)
    bench.add_argument("--service-cost-ms", type=int)
    bench.add_argument("--converged-fraction", type=float)
    bench.add_argument("--report", help="Write the JSON report here")
    bench.add_argument("--trace", help="Replay a JSON-lines trace instead of generating a workload")
    bench.add_argument("--log-level", default="WARNING")
    bench.set_defaults(handler=cmd_bench)

    daemon_pass = subparsers.add_parser("daemon-pass", help="Run one placement pass over a metadata snapshot")
    daemon_pass.add_argument("--metadata", required=True, help="JSON lines of {key, metadata}")
    daemon_pass.add_argument("--coefficient", type=float)
    daemon_pass.add_argument("--nodes", type=int, default=3)
    daemon_pass.add_argument("--now", type=int, help="Epoch millis of the pass (default: current time)")
    daemon_pass.add_argument("--expiry-ms", type=int)
    daemon_pass.add_argument("--log-level", default="WARNING")
    daemon_pass.set_defaults(handler=cmd_daemon_pass)

    serve = subparsers.add_parser("serve", help="Run one node's HTTP interface")
    serve.add_argument("--node-id", required=True)
    serve.add_argument("--port", type=int, default=8001)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--peers", required=True, help="node-1=http://127.0.0.1:8001,node-2=...")
    serve.add_argument("--serializer", help="Master propagator (default: first peer)")
    serve.add_argument("--coefficient", type=float)
    serve.add_argument("--remote-latency-ms", type=int, default=100)
    serve.add_argument("--inject-latency", action="store_true", help="Sleep the remote latency on every peer hop")
    serve.add_argument("--run-daemon", action="store_true")
    serve.add_argument("--daemon-interval-ms", type=int)
    serve.add_argument("--expiry-ms", type=int)
    serve.add_argument("--max-value-bytes", type=int)
    serve.add_argument("--log-level", default="INFO")
    serve.set_defaults(handler=cmd_serve)

    gen_trace = subparsers.add_parser("gen-trace", help="Write a workload trace as JSON lines")
    _add_workload_flags(gen_trace)
    gen_trace.add_argument("--output", required=True)
    gen_trace.add_argument("--log-level", default="WARNING")
    gen_trace.set_defaults(handler=cmd_gen_trace)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors, matching the validation exit code
        return e.code if isinstance(e.code, int) else EXIT_INVALID
    configure_logging(args.log_level)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())

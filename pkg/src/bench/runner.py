"""
Scenario runner: replays a workload against a freshly built simulated
cluster once per iteration and summarizes the per-request trace.

Requests are issued in workload order on one virtual timeline. Each client
stream is closed-loop: a request goes out once its stream's previous request
has completed, but never before the request ahead of it in the workload, so
every origin contributes accesses in the workload's own mix no matter how
fast its requests are served. The placement daemon is caught up to each
issue time first.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic.alias_generators import to_camel

from ..core.model import OwnershipPolicy
from ..sim.cluster import Scenario, SimConfig, SimulatedCluster, build_cluster, inject_scenario
from ..sim.workload import Request, WorkloadConfig, generate, key_names, preload_values
from .report import BenchReport, throughput_interval

logger = logging.getLogger(__name__)


class BenchSettings(BaseModel):
    model_config = ConfigDict(alias_generator=to_camel, populate_by_name=True, extra="forbid")

    iterations: int = Field(default=5, ge=1)
    # charged to every request in every scenario
    service_cost_millis: int = Field(default=1, ge=0)
    converged_fraction: float = Field(default=0.25, gt=0, le=1)
    phases: int = Field(default=10, ge=1)


@dataclass
class RequestRecord:
    index: int
    stream: int
    is_read: bool
    latency_millis: int
    local: bool
    failed: bool


@dataclass
class IterationTrace:
    """Everything measured while replaying one iteration"""

    records: List[RequestRecord] = field(default_factory=list)
    stream_start: int = 0
    stream_ends: Dict[int, int] = field(default_factory=dict)
    # per stream: local time when each of its requests completed
    stream_completions: Dict[int, List[int]] = field(default_factory=dict)
    daemon_passes: int = 0
    daemon_failures: int = 0

    @property
    def elapsed_millis(self) -> int:
        if not self.stream_ends:
            return 0
        return max(self.stream_ends.values()) - self.stream_start

    @property
    def throughput(self) -> float:
        return _rate(len(self.records), self.elapsed_millis)

    @property
    def failures(self) -> int:
        return sum(1 for record in self.records if record.failed)


def _rate(count: int, elapsed_millis: int) -> float:
    if count == 0:
        return 0.0
    if elapsed_millis <= 0:
        return math.inf
    return count / (elapsed_millis / 1000)


def assign_streams(requests: Sequence[Request], origins: Sequence[str], streams_per_node: int) -> List[int]:
    """Stream index per request; each origin's requests are dealt round-robin over its streams"""
    origin_index = {origin: position for position, origin in enumerate(origins)}
    issued: Dict[str, int] = {}
    streams = []
    for request in requests:
        if request.origin not in origin_index:
            raise ValueError(f"request origin {request.origin} is not an origin node of this cluster")
        count = issued.get(request.origin, 0)
        issued[request.origin] = count + 1
        streams.append(origin_index[request.origin] * streams_per_node + count % streams_per_node)
    return streams


def replay(
    cluster: SimulatedCluster,
    requests: Sequence[Request],
    settings: BenchSettings,
) -> IterationTrace:
    """Run requests through the cluster; the cluster must already hold its scenario"""
    clock = cluster.clock
    start = clock.now()
    cluster.daemon.reset(start)
    trace = IterationTrace(stream_start=start)

    streams = assign_streams(requests, cluster.origin_nodes, cluster.config.streams_per_node)
    free_at: Dict[int, int] = {}
    for stream in sorted(set(streams)):
        free_at[stream] = start
        trace.stream_ends[stream] = start
        trace.stream_completions[stream] = []

    issued_at = start
    for index, request in enumerate(requests):
        stream = streams[index]
        # waits for its own stream and never overtakes the request ahead of it
        now = max(free_at[stream], issued_at)
        issued_at = now
        trace.daemon_passes += cluster.daemon.tick(now)
        clock.jump_to(now)

        if request.is_read:
            result = cluster.fetch(request.origin, request.key)
            latency = result.latency_millis
            failed = result.failed
            local = not failed and result.found and not result.remote
        else:
            result = cluster.store(request.origin, request.key, request.value)
            latency = result.latency_millis
            failed = not result.success
            local = False

        finished = now + settings.service_cost_millis + latency
        trace.records.append(RequestRecord(index, stream, request.is_read, latency, local, failed))
        free_at[stream] = finished
        trace.stream_ends[stream] = finished
        trace.stream_completions[stream].append(finished)

    trace.daemon_failures = cluster.daemon.failed_passes
    cluster.quiesce()
    return trace


def _hit_rate(records: Sequence[RequestRecord]) -> float:
    reads = [record for record in records if record.is_read]
    if not reads:
        return 0.0
    return sum(1 for record in reads if record.local) / len(reads)


def phase_hit_rates(trace: IterationTrace, total: int, phases: int) -> List[float]:
    """Local hit rate of each of `phases` equal slices of the request list, in issue order"""
    by_index = sorted(trace.records, key=lambda record: record.index)
    bounds = np.linspace(0, total, phases + 1).astype(int)
    return [_hit_rate(by_index[bounds[i]:bounds[i + 1]]) for i in range(phases)]


def converged_records(trace: IterationTrace, fraction: float) -> Dict[int, List[RequestRecord]]:
    """Last `fraction` of every stream's requests"""
    per_stream: Dict[int, List[RequestRecord]] = {}
    for record in trace.records:
        per_stream.setdefault(record.stream, []).append(record)
    tails = {}
    for stream, records in per_stream.items():
        keep = max(1, math.ceil(len(records) * fraction))
        tails[stream] = records[-keep:]
    return tails


def converged_throughput(trace: IterationTrace, fraction: float) -> float:
    """Sum over streams of requests per second during the converged tail"""
    total = 0.0
    for stream, completions in trace.stream_completions.items():
        if not completions:
            continue
        keep = max(1, math.ceil(len(completions) * fraction))
        if keep < len(completions):
            began = completions[-keep - 1]
        else:
            began = trace.stream_start
        total += _rate(keep, completions[-1] - began)
    return total


def _preload(workload: WorkloadConfig, requests: Sequence[Request]) -> "tuple[List[str], List[bytes]]":
    keys = key_names(workload.key_count)
    known = set(keys)
    keys = keys + sorted({request.key for request in requests} - known)
    return keys, preload_values(workload, keys)


def run_scenario(
    sim_config: SimConfig,
    scenario: "Scenario | str",
    workload: WorkloadConfig,
    iterations: Optional[int] = None,
    policy: Optional[OwnershipPolicy] = None,
    settings: Optional[BenchSettings] = None,
    requests: Optional[Sequence[Request]] = None,
) -> BenchReport:
    """Measure one scenario over several iterations.

    Each iteration builds a new cluster from sim_config, pre-loads every key
    according to the scenario, then replays the workload generated with seed
    `workload.seed + iteration` (or the given requests, for trace replay).
    Pre-loading is not measured.
    """
    scenario = Scenario.parse(scenario) if not isinstance(scenario, Scenario) else scenario
    settings = settings or BenchSettings()
    if iterations is not None:
        settings = settings.model_copy(update={"iterations": iterations})
    if sim_config.clock_mode != "virtual":
        logger.warning("Benchmarks replay on a virtual clock; ignoring clockMode=wall")
        sim_config = sim_config.model_copy(update={"clock_mode": "virtual"})
    if requests is not None:
        workload = workload.model_copy(update={"total_requests": len(requests)})

    traces: List[IterationTrace] = []
    effective_policy = None
    for iteration in range(settings.iterations):
        cluster = build_cluster(sim_config, policy)
        effective_policy = cluster.policy
        if requests is None:
            iteration_workload = workload.model_copy(
                update={"origin_nodes": cluster.origin_nodes, "seed": workload.seed + iteration}
            )
            iteration_requests = generate(iteration_workload)
        else:
            iteration_requests = list(requests)

        keys, values = _preload(workload, iteration_requests)
        inject_scenario(cluster, scenario, keys, values)
        trace = replay(cluster, iteration_requests, settings)
        traces.append(trace)
        logger.info(
            f"{scenario.value} iteration {iteration + 1}/{settings.iterations}: "
            f"{trace.throughput:.2f} ops/s, {trace.failures} failures, {trace.daemon_passes} daemon passes"
        )

    return summarize(scenario, workload, sim_config, effective_policy, settings, traces)


def summarize(
    scenario: Scenario,
    workload: WorkloadConfig,
    sim_config: SimConfig,
    policy: OwnershipPolicy,
    settings: BenchSettings,
    traces: Sequence[IterationTrace],
) -> BenchReport:
    """Report statistics; a pure function of the recorded traces"""
    throughputs = [trace.throughput for trace in traces]
    mean, low, high = throughput_interval(throughputs)

    latencies = np.array([record.latency_millis for trace in traces for record in trace.records], dtype=float)
    all_records = [record for trace in traces for record in trace.records]

    phase_rates = np.mean(
        [phase_hit_rates(trace, len(trace.records), settings.phases) for trace in traces], axis=0
    )
    converged = [
        record
        for trace in traces
        for tail in converged_records(trace, settings.converged_fraction).values()
        for record in tail
    ]

    return BenchReport(
        scenario=scenario.value,
        workload=workload.summary(),
        iterations=len(traces),
        throughput_ops_per_sec=mean,
        ci99_low=low,
        ci99_high=high,
        iteration_throughputs=throughputs,
        mean_latency_millis=float(latencies.mean()) if latencies.size else 0.0,
        p50=float(np.percentile(latencies, 50)) if latencies.size else 0.0,
        p99=float(np.percentile(latencies, 99)) if latencies.size else 0.0,
        local_hit_rate=_hit_rate(all_records),
        converged_hit_rate=_hit_rate(converged),
        converged_throughput_ops_per_sec=float(
            np.mean([converged_throughput(trace, settings.converged_fraction) for trace in traces])
        ),
        hit_rate_by_phase=[float(rate) for rate in phase_rates],
        failures=sum(trace.failures for trace in traces),
        daemon_passes=sum(trace.daemon_passes for trace in traces),
        service_cost_millis=settings.service_cost_millis,
        config={
            "sim": sim_config.model_dump(by_alias=True),
            "policy": policy.model_dump(by_alias=True) if policy is not None else None,
            "bench": settings.model_dump(by_alias=True),
            "seed": workload.seed,
        },
    )

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple

from ..core.model import (
    ClusterTopology,
    KeyMetadata,
    NodeId,
    OwnershipPolicy,
    check_policy,
    eligible_owners,
    ownership_fraction,
)
from ..service.transport import Transport
from ..sim.clock import Clock
from ..store.access_recorder import AccessRecorder
from ..store.kv_backend import KVBackend, StoredValue
from ..store.metadata_store import MetadataStore

logger = logging.getLogger(__name__)


@dataclass
class KeyPlacement:
    current_hosts: Set[NodeId]
    new_hosts: Set[NodeId]
    obsolete_hosts: Set[NodeId]
    final_hosts: Set[NodeId]

    def to_dict(self) -> Dict[str, List[str]]:
        return {
            "newHosts": sorted(self.new_hosts),
            "obsoleteHosts": sorted(self.obsolete_hosts),
            "finalHosts": sorted(self.final_hosts),
        }


@dataclass
class PlacementPlan:
    """Decisions of one daemon pass"""

    per_key: Dict[str, KeyPlacement] = field(default_factory=dict)
    expired: Set[str] = field(default_factory=set)
    computed_at: int = 0

    @property
    def is_empty(self) -> bool:
        return not self.per_key and not self.expired

    def to_dict(self) -> Dict[str, Any]:
        return {
            "computedAt": self.computed_at,
            "perKey": {key: self.per_key[key].to_dict() for key in sorted(self.per_key)},
            "expired": sorted(self.expired),
        }


@dataclass
class ApplyReport:
    replications: int = 0
    evictions: int = 0
    expirations: int = 0
    failures: int = 0
    failed_keys: List[str] = field(default_factory=list)
    # copies left behind on nodes no longer listed as hosts
    orphans: Dict[str, Set[NodeId]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "replications": self.replications,
            "evictions": self.evictions,
            "expirations": self.expirations,
            "failures": self.failures,
        }


def plan_key(meta: KeyMetadata, policy: OwnershipPolicy) -> Optional[KeyPlacement]:
    """Placement decision for one live key; None when nothing changes"""
    if meta.total_access_count <= 0:
        return None

    owner_hosts = eligible_owners(meta, policy)
    if not owner_hosts:
        # only possible when more distinct accessors than 1/H exist
        return None
    delete_hosts = {
        node
        for node in meta.host_accesses
        if ownership_fraction(meta, node) - policy.coefficient < 0
    }
    unaccessed_hosts = {node for node in meta.hosts if meta.host_accesses.get(node, 0) == 0}

    new_hosts = owner_hosts - meta.hosts
    obsolete_hosts = (meta.hosts & delete_hosts) | unaccessed_hosts
    if not new_hosts and not obsolete_hosts:
        return None
    final_hosts = (meta.hosts | new_hosts) - obsolete_hosts
    return KeyPlacement(
        current_hosts=set(meta.hosts),
        new_hosts=new_hosts,
        obsolete_hosts=obsolete_hosts,
        final_hosts=final_hosts,
    )


def is_expired(meta: KeyMetadata, policy: OwnershipPolicy, now: int) -> bool:
    return now - meta.last_accessed_date > policy.expiry_millis


def placement_pass(snapshot: Iterable[Tuple[str, KeyMetadata]], policy: OwnershipPolicy, now: int) -> PlacementPlan:
    """Compute owner, eviction and expiry decisions from a metadata snapshot"""
    plan = PlacementPlan(computed_at=now)
    for key, meta in snapshot:
        if is_expired(meta, policy, now):
            plan.expired.add(key)
            continue
        placement = plan_key(meta, policy)
        if placement is not None:
            plan.per_key[key] = placement
    return plan


class DataLayer:
    """Daemon-side access to every node's store, issued from the daemon's node"""

    def __init__(self, node_id: NodeId, backend: KVBackend, transport: Transport, topology: ClusterTopology):
        self.node_id = node_id
        self.backend = backend
        self.transport = transport
        self.topology = topology

    def get(self, node: NodeId, key: str) -> Optional[StoredValue]:
        if node == self.node_id:
            return self.backend.get(key)
        return self.transport.get(self.node_id, node, key).payload

    def put(self, node: NodeId, key: str, value: StoredValue) -> None:
        if node == self.node_id:
            self.backend.put(key, value)
        else:
            self.transport.put(self.node_id, node, key, value)

    def delete(self, node: NodeId, key: str) -> bool:
        if node == self.node_id:
            return self.backend.delete(key)
        return bool(self.transport.delete(self.node_id, node, key).payload)

    def copy_source(self, destination: NodeId, candidates: Iterable[NodeId]) -> List[NodeId]:
        """Candidate hosts ordered by latency to destination"""
        known = [node for node in candidates if node in self.topology]
        return sorted(known, key=lambda node: (self.topology.latency(node, destination), node))


def apply_plan(plan: PlacementPlan, metadata: MetadataStore, data: DataLayer) -> ApplyReport:
    """Enforce a plan: replicate, repoint metadata, then evict; purge expired keys"""
    report = ApplyReport()
    for key in sorted(plan.per_key):
        try:
            _apply_key(key, plan.per_key[key], metadata, data, report)
        except Exception as e:
            report.failures += 1
            report.failed_keys.append(key)
            logger.warning(f"Placement of {key} failed, retrying next pass: {e}")

    for key in sorted(plan.expired):
        meta = metadata.get(key)
        if meta is None:
            continue
        # drop the metadata first so no fetch is routed to a purged copy
        metadata.delete(key)
        report.expirations += 1
        for node in sorted(meta.hosts):
            try:
                data.delete(node, key)
            except Exception as e:
                report.orphans.setdefault(key, set()).add(node)
                logger.warning(f"Could not purge expired {key} from {node}: {e}")
    return report


def _apply_key(key: str, placement: KeyPlacement, metadata: MetadataStore, data: DataLayer, report: ApplyReport):
    if placement.new_hosts:
        for destination in sorted(placement.new_hosts):
            value = _read_from_any(key, data, data.copy_source(destination, placement.current_hosts))
            data.put(destination, key, value)
            report.replications += 1

    # every final host holds the value before metadata points at it
    metadata.set_hosts(key, placement.final_hosts)

    for node in sorted(placement.obsolete_hosts):
        try:
            data.delete(node, key)
            report.evictions += 1
        except Exception as e:
            report.orphans.setdefault(key, set()).add(node)
            logger.warning(f"Could not evict {key} from {node}: {e}")
    logger.debug(f"Placed {key}: +{sorted(placement.new_hosts)} -{sorted(placement.obsolete_hosts)}")


def _read_from_any(key: str, data: DataLayer, sources: List[NodeId]) -> StoredValue:
    last_error: Optional[Exception] = None
    for source in sources:
        try:
            value = data.get(source, key)
        except Exception as e:
            last_error = e
            continue
        if value is not None:
            return value
    raise LookupError(f"no current host could supply {key}") from last_error


@dataclass
class PassResult:
    plan: PlacementPlan
    report: ApplyReport
    scanned: int


class PlacementDaemon:
    """Periodic repartitioner; one pass at a time"""

    def __init__(
        self,
        metadata: MetadataStore,
        data: DataLayer,
        policy: OwnershipPolicy,
        node_count: int,
        clock: Clock,
        recorder: Optional[AccessRecorder] = None,
        incremental: bool = True,
    ):
        check_policy(policy, node_count).raise_for_violation()
        self.metadata = metadata
        self.data = data
        self.policy = policy
        self.clock = clock
        self.recorder = recorder
        self.incremental = incremental
        self.enabled = True

        self.passes_run = 0
        self.failed_passes = 0
        self.last_result: Optional[PassResult] = None
        self._retry_keys: Set[str] = set()
        self._orphans: Dict[str, Set[NodeId]] = {}
        self._next_sweep_at: Optional[int] = None
        self._next_due = clock.now() + policy.daemon_interval_millis
        self._pass_lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def reset(self, start_millis: int):
        """Schedule the first pass one interval after start_millis"""
        self._next_due = start_millis + self.policy.daemon_interval_millis

    def run_pass(self, now: Optional[int] = None) -> PassResult:
        """meta_scan -> placement_pass -> apply_plan"""
        now = self.clock.now() if now is None else now
        with self._pass_lock:
            if self.recorder is not None:
                self.recorder.flush()
            keys, full_sweep = self._keys_to_plan(now)
            snapshot = self.metadata.scan(sorted(keys) if keys is not None else None)
            if full_sweep:
                self._schedule_sweep(snapshot, now)

            plan = placement_pass(snapshot, self.policy, now)
            report = apply_plan(plan, self.metadata, self.data)
            self._retry_keys = set(report.failed_keys)
            self._purge_orphans()
            for key, nodes in report.orphans.items():
                self._orphans.setdefault(key, set()).update(nodes)

            self.passes_run += 1
            self.last_result = PassResult(plan=plan, report=report, scanned=len(snapshot))
            if not plan.is_empty:
                logger.info(
                    f"Placement pass at {now}: scanned {len(snapshot)} keys, "
                    f"{report.replications} replications, {report.evictions} evictions, "
                    f"{report.expirations} expirations, {report.failures} failures"
                )
            return self.last_result

    def tick(self, now: int) -> int:
        """Run every pass that is due at or before now; returns how many ran"""
        ran = 0
        while self._next_due <= now:
            if self.enabled:
                self._run_guarded(self._next_due)
                ran += 1
            self._next_due += self.policy.daemon_interval_millis
        return ran

    def start(self):
        """Run passes on a background thread every interval of wall time"""
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._run_loop, name="placement-daemon", daemon=True)
        self._thread.start()
        logger.info(f"Placement daemon started, interval {self.policy.daemon_interval_millis}ms")

    def stop(self):
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=5)
            self._thread = None

    @property
    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def _run_loop(self):
        interval = self.policy.daemon_interval_millis / 1000
        while not self._stop.wait(interval):
            if self.enabled:
                self._run_guarded(None)

    def _run_guarded(self, now: Optional[int]):
        try:
            self.run_pass(now)
        except Exception as e:
            self.failed_passes += 1
            logger.error(f"Placement pass failed, waiting for the next interval: {e}")

    def _keys_to_plan(self, now: int) -> Tuple[Optional[Set[str]], bool]:
        changed = self.metadata.drain_changed()
        if not self.incremental or self._next_sweep_at is None or now >= self._next_sweep_at:
            return None, True
        return changed | self._retry_keys, False

    def _schedule_sweep(self, snapshot: List[Tuple[str, KeyMetadata]], now: int):
        # no key can expire before its last access plus the expiry window;
        # keys created later are accessed no earlier than now
        oldest = min([meta.last_accessed_date for _, meta in snapshot] + [now])
        self._next_sweep_at = oldest + self.policy.expiry_millis + 1

    def _purge_orphans(self):
        for key in list(self._orphans):
            meta = self.metadata.get(key)
            hosts = meta.hosts if meta is not None else set()
            remaining = set()
            for node in self._orphans[key] - hosts:
                try:
                    self.data.delete(node, key)
                except Exception:
                    remaining.add(node)
            if remaining:
                self._orphans[key] = remaining
            else:
                del self._orphans[key]


def run_daemon(
    metadata: MetadataStore,
    data: DataLayer,
    policy: OwnershipPolicy,
    clock: Clock,
    node_count: int,
    recorder: Optional[AccessRecorder] = None,
) -> PlacementDaemon:
    """Validate the policy and start a daemon; virtual clocks drive it through tick()"""
    daemon = PlacementDaemon(metadata, data, policy, node_count, clock, recorder=recorder)
    if not clock.is_virtual:
        daemon.start()
    return daemon

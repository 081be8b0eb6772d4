import logging
from enum import Enum
from typing import Dict, List, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic.alias_generators import to_camel

from ..core.errors import UnknownNodeError, UnknownScenarioError
from ..core.model import ClusterTopology, KeyMetadata, NodeId, OwnershipPolicy, check_policy
from ..daemon.placement import DataLayer, PlacementDaemon
from ..service.node_service import FetchResult, NodeService, StoreResult
from ..store.access_recorder import DeferredAccessRecorder
from ..store.kv_backend import InMemoryBackend, StoredValue
from ..store.metadata_store import InMemoryMetadataStore
from .clock import Clock, VirtualClock, WallClock
from .network import InProcessTransport, SimulatedNetwork

logger = logging.getLogger(__name__)


class Scenario(str, Enum):
    LOCAL = "local"
    REMOTE = "remote"
    OPTIMIZED = "optimized"

    @classmethod
    def parse(cls, name: str) -> "Scenario":
        try:
            return cls(str(name).lower())
        except ValueError:
            raise UnknownScenarioError(f"unknown scenario {name!r}; expected local, remote or optimized") from None


def node_ids(count: int) -> List[NodeId]:
    return [f"node-{index}" for index in range(1, count + 1)]


class SimConfig(BaseModel):
    """Shape of the simulated cluster"""

    model_config = ConfigDict(alias_generator=to_camel, populate_by_name=True, extra="forbid")

    node_count: int = Field(default=3, ge=1)
    remote_latency_millis: int = Field(default=100, ge=0)
    master_propagator: Optional[str] = None
    seed: int = 0
    clock_mode: Literal["virtual", "wall"] = "virtual"
    streams_per_node: int = Field(default=1, ge=1)
    # optional asymmetric matrix: latency_matrix[source][target]
    latency_matrix: Optional[Dict[str, Dict[str, int]]] = None
    max_value_bytes: Optional[int] = Field(default=None, gt=0)
    start_millis: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_nodes(self) -> "SimConfig":
        nodes = node_ids(self.node_count)
        if self.master_propagator is not None and self.master_propagator not in nodes:
            raise ValueError(f"masterPropagator {self.master_propagator} is not one of {nodes}")
        return self

    @property
    def nodes(self) -> List[NodeId]:
        return node_ids(self.node_count)

    def topology(self) -> ClusterTopology:
        nodes = self.nodes
        master = self.master_propagator or nodes[0]
        topology = ClusterTopology.uniform(nodes, master, self.remote_latency_millis)
        if self.latency_matrix:
            latency = dict(topology.latency_millis)
            for source, row in self.latency_matrix.items():
                for target, millis in row.items():
                    latency[(source, target)] = millis
            topology = ClusterTopology(nodes=nodes, master_propagator=master, latency_millis=latency)
        return topology


class SimulatedCluster:
    """n nodes sharing one metadata layer, a clock, and a latency-charging network"""

    def __init__(self, config: SimConfig, policy: OwnershipPolicy):
        self.config = config
        self.policy = policy
        self.topology = config.topology()
        self.clock: Clock = VirtualClock(config.start_millis) if config.clock_mode == "virtual" else WallClock()
        self.network = SimulatedNetwork(self.topology, self.clock)
        self.transport = InProcessTransport(self.network)
        self.metadata = InMemoryMetadataStore()
        self.recorder = DeferredAccessRecorder(self.metadata)

        self.backends: Dict[NodeId, InMemoryBackend] = {}
        self.services: Dict[NodeId, NodeService] = {}
        for node in self.topology.nodes:
            backend = InMemoryBackend(max_value_bytes=config.max_value_bytes)
            service = NodeService(
                node_id=node,
                topology=self.topology,
                backend=backend,
                metadata=self.metadata,
                recorder=self.recorder,
                transport=self.transport,
                clock=self.clock,
            )
            self.backends[node] = backend
            self.services[node] = service
            self.transport.register(service)

        master = self.topology.master_propagator
        self.daemon = PlacementDaemon(
            metadata=self.metadata,
            data=DataLayer(master, self.backends[master], self.transport, self.topology),
            policy=policy,
            node_count=self.topology.size,
            clock=self.clock,
            recorder=self.recorder,
        )
        self.daemon.enabled = False

    @property
    def nodes(self) -> List[NodeId]:
        return self.topology.nodes

    @property
    def holder_node(self) -> NodeId:
        """Node that holds every key in the remote scenarios"""
        return self.topology.nodes[-1]

    @property
    def origin_nodes(self) -> List[NodeId]:
        """Nodes that issue client requests"""
        if self.topology.size == 1:
            return list(self.topology.nodes)
        return [node for node in self.topology.nodes if node != self.holder_node]

    @property
    def serializer(self) -> NodeService:
        return self.services[self.topology.master_propagator]

    def fetch(self, handler: NodeId, key: str) -> FetchResult:
        return self._service(handler).fetch(key)

    def store(self, handler: NodeId, key: str, value: StoredValue) -> StoreResult:
        return self._service(handler).store(key, value)

    def simulate_request_latency(self, source: NodeId, target: NodeId) -> int:
        return self.network.simulate_request_latency(source, target)

    def replica_nodes(self, key: str) -> List[NodeId]:
        """Nodes whose store currently holds key"""
        return [node for node in self.nodes if self.backends[node].get(key) is not None]

    def quiesce(self):
        """Make every recorded access visible in metadata"""
        self.recorder.flush()

    def _service(self, node: NodeId) -> NodeService:
        if node not in self.services:
            raise UnknownNodeError(node)
        return self.services[node]


def build_cluster(config: SimConfig, policy: Optional[OwnershipPolicy] = None) -> SimulatedCluster:
    """Instantiate nodes, backends and shared metadata; the daemon is built but not enabled"""
    if policy is None:
        default = OwnershipPolicy()
        policy = default.model_copy(update={"coefficient": min(default.coefficient, 1 / config.node_count)})
    check_policy(policy, config.node_count).raise_for_violation()
    cluster = SimulatedCluster(config, policy)
    logger.info(
        f"Built cluster of {config.node_count} nodes, serializer {cluster.topology.master_propagator}, "
        f"{config.clock_mode} clock"
    )
    return cluster


def inject_scenario(
    cluster: SimulatedCluster,
    scenario: "Scenario | str",
    keys: Sequence[str],
    values: Sequence[StoredValue],
) -> None:
    """Pre-load keys according to the scenario and switch the daemon on or off"""
    scenario = Scenario.parse(scenario) if not isinstance(scenario, Scenario) else scenario
    if len(keys) != len(values):
        raise ValueError(f"got {len(keys)} keys but {len(values)} values")

    origins = cluster.origin_nodes
    if scenario is Scenario.LOCAL:
        first, others = origins[0], origins[1:]
        for key, value in zip(keys, values):
            _preload(cluster, first, key, value)
            for node in others:
                cluster.backends[node].put(key, value)
            if others:
                cluster.metadata.set_hosts(key, origins)
    else:
        for key, value in zip(keys, values):
            _preload(cluster, cluster.holder_node, key, value)

    cluster.metadata.drain_changed()
    cluster.daemon.enabled = scenario is Scenario.OPTIMIZED
    logger.info(f"Injected {scenario.value} scenario with {len(keys)} keys")


def _preload(cluster: SimulatedCluster, node: NodeId, key: str, value: StoredValue):
    result = cluster.store(node, key, value)
    if not result.success:
        raise RuntimeError(f"pre-load of {key} on {node} failed: {result.error}")


def seed_metadata(cluster: SimulatedCluster, key: str, meta: KeyMetadata, value: StoredValue):
    """Place value on every host of meta and install meta as-is"""
    for node in meta.hosts:
        cluster.backends[node].put(key, value)
    cluster.metadata.put(key, meta)

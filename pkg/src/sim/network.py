import logging
from typing import Dict, TYPE_CHECKING

from ..core.errors import UnknownNodeError
from ..core.model import ClusterTopology, NodeId
from ..service.transport import Transport, TransportReply
from ..store.kv_backend import StoredValue
from .clock import Clock

if TYPE_CHECKING:
    from ..service.node_service import NodeService

logger = logging.getLogger(__name__)


class SimulatedNetwork:
    """Charges topology latency for every hop by advancing the clock"""

    def __init__(self, topology: ClusterTopology, clock: Clock):
        self.topology = topology
        self.clock = clock
        self.remote_hops = 0

    def simulate_request_latency(self, source: NodeId, target: NodeId) -> int:
        millis = self.topology.latency(source, target)
        if millis:
            self.remote_hops += 1
            self.clock.advance(millis)
        return millis


class InProcessTransport(Transport):
    """Transport between nodes living in one process"""

    def __init__(self, network: SimulatedNetwork):
        self.network = network
        self.nodes: Dict[NodeId, "NodeService"] = {}

    def register(self, service: "NodeService"):
        self.nodes[service.node_id] = service

    def _node(self, node_id: NodeId) -> "NodeService":
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def get(self, source: NodeId, target: NodeId, key: str) -> TransportReply:
        node = self._node(target)
        charged = self.network.simulate_request_latency(source, target)
        return TransportReply(node.backend.get(key), charged)

    def put(self, source: NodeId, target: NodeId, key: str, value: StoredValue) -> TransportReply:
        node = self._node(target)
        charged = self.network.simulate_request_latency(source, target)
        node.backend.put(key, value)
        return TransportReply(None, charged)

    def delete(self, source: NodeId, target: NodeId, key: str) -> TransportReply:
        node = self._node(target)
        charged = self.network.simulate_request_latency(source, target)
        return TransportReply(node.backend.delete(key), charged)

    def relay_store(self, source: NodeId, target: NodeId, key: str, value: StoredValue) -> TransportReply:
        node = self._node(target)
        charged = self.network.simulate_request_latency(source, target)
        return TransportReply(node.serialize_store(key, value, origin=source), charged)

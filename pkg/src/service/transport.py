from abc import ABC, abstractmethod
from typing import Any, NamedTuple, Optional

from ..core.model import NodeId
from ..store.kv_backend import StoredValue


class TransportReply(NamedTuple):
    """Payload of a peer call plus the latency charged for the hop"""

    payload: Any
    latency_millis: int


class Transport(ABC):
    """How one node reaches another node's data layer or its serializer"""

    @abstractmethod
    def get(self, source: NodeId, target: NodeId, key: str) -> TransportReply:
        """payload: the value stored on target, or None"""

    @abstractmethod
    def put(self, source: NodeId, target: NodeId, key: str, value: StoredValue) -> TransportReply:
        """payload: None"""

    @abstractmethod
    def delete(self, source: NodeId, target: NodeId, key: str) -> TransportReply:
        """payload: whether the key existed on target"""

    @abstractmethod
    def relay_store(self, source: NodeId, target: NodeId, key: str, value: StoredValue) -> TransportReply:
        """Forward a store to the serializer; payload: the serializer's StoreResult"""

    def close(self):
        pass


def describe_failure(error: Exception) -> Optional[str]:
    return f"{type(error).__name__}: {error}" if error else None

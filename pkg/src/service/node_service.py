import logging
import threading
import zlib
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Any, Deque, Dict, Optional, Tuple

from ..core.errors import DataDivergenceError, MetadataExistsError, RedynisError, UnknownKeyError
from ..core.model import ClusterTopology, KeyMetadata, NodeId
from ..sim.clock import Clock
from ..store.access_recorder import AccessRecorder
from ..store.kv_backend import KVBackend, StoredValue
from ..store.metadata_store import AccessEvent, MetadataStore
from .transport import Transport, describe_failure

logger = logging.getLogger(__name__)

ARRIVAL_LOG_SIZE = 10_000
# writes to keys sharing a stripe are serialized together
LOCK_STRIPES = 256


class StorePath(str, Enum):
    LOCAL_ONLY = "local-only"
    SERIALIZER_DIRECT = "serializer-direct"
    SERIALIZER_RELAYED = "serializer-relayed"
    CREATED = "created"


@dataclass
class FetchResult:
    value: Optional[StoredValue]
    served_by: NodeId
    remote: bool
    latency_millis: int
    error: Optional[str] = None

    @property
    def found(self) -> bool:
        return self.value is not None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class StoreResult:
    success: bool
    path: Optional[StorePath]
    latency_millis: int = 0
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {"success": self.success, "path": self.path.value if self.path else None}
        if self.error:
            data["error"] = self.error
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any], latency_millis: int = 0) -> "StoreResult":
        path = data.get("path")
        return cls(
            success=bool(data.get("success")),
            path=StorePath(path) if path else None,
            latency_millis=latency_millis,
            error=data.get("error"),
        )


@dataclass(frozen=True)
class Arrival:
    """A write as applied by the serializer, in arrival order"""

    key: str
    origin: NodeId
    value: StoredValue


class NodeService:
    """Web-service layer of one node: fetch and store against the data and metadata layers"""

    def __init__(
        self,
        node_id: NodeId,
        topology: ClusterTopology,
        backend: KVBackend,
        metadata: MetadataStore,
        recorder: AccessRecorder,
        transport: Transport,
        clock: Clock,
    ):
        if node_id not in topology:
            raise ValueError(f"{node_id} is not part of the topology")
        self.node_id = node_id
        self.topology = topology
        self.backend = backend
        self.metadata = metadata
        self.recorder = recorder
        self.transport = transport
        self.clock = clock

        self.arrival_log: Deque[Arrival] = deque(maxlen=ARRIVAL_LOG_SIZE)
        self._key_locks = [threading.Lock() for _ in range(LOCK_STRIPES)]
        self.divergences = 0

    @property
    def is_serializer(self) -> bool:
        return self.node_id == self.topology.master_propagator

    @property
    def role(self) -> str:
        return "serializer" if self.is_serializer else "replica"

    def fetch(self, key: str) -> FetchResult:
        """Serve a read locally when this node owns the key, otherwise from the closest owner"""
        meta = self.metadata.get(key)
        if meta is None:
            return FetchResult(value=None, served_by=self.node_id, remote=False, latency_millis=0)

        if self.node_id in meta.hosts:
            served_by, latency = self.node_id, 0
            value = self.backend.get(key)
        else:
            served_by = self.topology.closest(self.node_id, meta.hosts)
            try:
                value, latency = self.transport.get(self.node_id, served_by, key)
            except RedynisError as e:
                logger.warning(f"Remote fetch of {key} from {served_by} failed: {e}")
                return FetchResult(None, served_by, True, self.topology.latency(self.node_id, served_by), describe_failure(e))

        remote = served_by != self.node_id
        if value is None:
            self.divergences += 1
            error = DataDivergenceError(f"metadata lists {served_by} as owner of {key} but its store lacks the key")
            logger.warning(str(error))
            return FetchResult(None, served_by, remote, latency, describe_failure(error))

        self.recorder.submit(AccessEvent(key=key, accessor=self.node_id, at_millis=self.clock.now()))
        return FetchResult(value=value, served_by=served_by, remote=remote, latency_millis=latency)

    def store(self, key: str, value: StoredValue) -> StoreResult:
        """Write a value, creating the key here or routing through the serializer"""
        try:
            meta = self.metadata.get(key)
            if meta is None:
                created, meta = self._create(key, value)
                if created:
                    return StoreResult(success=True, path=StorePath.CREATED)
            return self._store_existing(key, value, meta)
        except Exception as e:
            logger.warning(f"Store of {key} at {self.node_id} failed: {e}")
            return StoreResult(success=False, path=None, error=describe_failure(e))

    def _create(self, key: str, value: StoredValue) -> Tuple[bool, Optional[KeyMetadata]]:
        self.backend.put(key, value)
        try:
            self.metadata.create(key, self.node_id, self.clock.now())
            return True, None
        except MetadataExistsError:
            # lost the creation race: the winner's metadata decides where the key lives
            meta = self.metadata.get(key)
            if meta is None or self.node_id not in meta.hosts:
                self.backend.delete(key)
            if meta is None:
                raise UnknownKeyError(key)
            logger.debug(f"{self.node_id} lost creation race for {key}, retrying as an update")
            return False, meta

    def _store_existing(self, key: str, value: StoredValue, meta: KeyMetadata) -> StoreResult:
        if meta.hosts == {self.node_id}:
            self.backend.put(key, value)
            return StoreResult(success=True, path=StorePath.LOCAL_ONLY)

        if self.is_serializer:
            return self.serialize_store(key, value, origin=self.node_id)

        result, hop = self.transport.relay_store(self.node_id, self.topology.master_propagator, key, value)
        logger.debug(f"{self.node_id} relayed {key} to {self.topology.master_propagator}")
        return StoreResult(
            success=result.success,
            path=StorePath.SERIALIZER_RELAYED,
            latency_millis=hop + result.latency_millis,
            error=result.error,
        )

    def serialize_store(self, key: str, value: StoredValue, origin: NodeId) -> StoreResult:
        """Apply a write to every owner of key; only the master propagator runs this"""
        if not self.is_serializer:
            return StoreResult(False, None, error=f"{self.node_id} is not the write serializer")
        try:
            with self._lock_for(key):
                # re-read rather than trusting the relaying node's view of the hosts
                meta = self.metadata.get(key)
                if meta is None:
                    raise UnknownKeyError(key)
                latency = 0
                for host in sorted(meta.hosts):
                    if host == self.node_id:
                        self.backend.put(key, value)
                    else:
                        _, charged = self.transport.put(self.node_id, host, key, value)
                        latency += charged
                self.arrival_log.append(Arrival(key=key, origin=origin, value=value))
            return StoreResult(success=True, path=StorePath.SERIALIZER_DIRECT, latency_millis=latency)
        except Exception as e:
            logger.warning(f"Serializer failed to apply {key} from {origin}: {e}")
            return StoreResult(success=False, path=StorePath.SERIALIZER_DIRECT, error=describe_failure(e))

    def last_arrival(self, key: str) -> Optional[Arrival]:
        for arrival in reversed(self.arrival_log):
            if arrival.key == key:
                return arrival
        return None

    def _lock_for(self, key: str) -> threading.Lock:
        return self._key_locks[zlib.crc32(key.encode("utf-8")) % LOCK_STRIPES]

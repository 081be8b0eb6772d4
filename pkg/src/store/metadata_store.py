import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Set, Tuple

from ..core.errors import InvalidHostsError, MetadataExistsError, UnknownKeyError
from ..core.model import KeyMetadata, NodeId

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AccessEvent:
    """One fetch of key by accessor, recorded for the placement daemon"""

    key: str
    accessor: NodeId
    at_millis: int


class MetadataStore(ABC):
    """The metadata layer: one logical, authoritative copy of every key's metadata"""

    @abstractmethod
    def get(self, key: str) -> Optional[KeyMetadata]:
        """Copy of the key's metadata, or None"""

    @abstractmethod
    def create(self, key: str, initial_host: NodeId, at_millis: int) -> None:
        """First writer wins; raises MetadataExistsError for the loser"""

    @abstractmethod
    def record_access(self, event: AccessEvent) -> bool:
        """Count one access; returns False when the event was dropped"""

    @abstractmethod
    def set_hosts(self, key: str, new_hosts: Iterable[NodeId]) -> None:
        """Replace the host set atomically; access counts are untouched"""

    @abstractmethod
    def delete(self, key: str) -> None:
        """Remove the key's metadata (idempotent)"""

    @abstractmethod
    def scan(self, keys: Optional[Iterable[str]] = None) -> List[Tuple[str, KeyMetadata]]:
        """Snapshot of all keys, or of the given keys that still exist"""

    def drain_changed(self) -> Set[str]:
        """Keys whose counts or existence changed since the last drain.

        Stores that do not track changes report every key, which turns every
        placement pass into a full scan.
        """
        return {key for key, _ in self.scan()}

    def put(self, key: str, meta: KeyMetadata) -> None:
        """Overwrite a key's metadata wholesale (test harness seeding)"""
        raise NotImplementedError


class InMemoryMetadataStore(MetadataStore):
    """Lock-protected metadata map supporting many recorders and one daemon"""

    def __init__(self):
        self._entries: Dict[str, KeyMetadata] = {}
        self._changed: Set[str] = set()
        self._lock = threading.Lock()
        self.dropped_events = 0

    def get(self, key: str) -> Optional[KeyMetadata]:
        with self._lock:
            meta = self._entries.get(key)
            return meta.copy() if meta is not None else None

    def create(self, key: str, initial_host: NodeId, at_millis: int) -> None:
        with self._lock:
            if key in self._entries:
                raise MetadataExistsError(f"metadata for {key} already exists")
            self._entries[key] = KeyMetadata(
                total_access_count=0,
                hosts={initial_host},
                host_accesses={},
                last_accessed_date=at_millis,
            )
            self._changed.add(key)

    def record_access(self, event: AccessEvent) -> bool:
        with self._lock:
            meta = self._entries.get(event.key)
            if meta is None:
                self.dropped_events += 1
                logger.warning(f"Dropped access to {event.key} from {event.accessor}: no metadata")
                return False
            meta.host_accesses[event.accessor] = meta.host_accesses.get(event.accessor, 0) + 1
            meta.total_access_count += 1
            if event.at_millis > meta.last_accessed_date:
                meta.last_accessed_date = event.at_millis
            self._changed.add(event.key)
            return True

    def set_hosts(self, key: str, new_hosts: Iterable[NodeId]) -> None:
        new_hosts = set(new_hosts)
        if not new_hosts:
            raise InvalidHostsError(f"refusing to leave {key} without hosts")
        with self._lock:
            meta = self._entries.get(key)
            if meta is None:
                raise UnknownKeyError(key)
            meta.hosts = new_hosts

    def delete(self, key: str) -> None:
        with self._lock:
            self._entries.pop(key, None)
            self._changed.discard(key)

    def put(self, key: str, meta: KeyMetadata) -> None:
        if not meta.hosts:
            raise InvalidHostsError(f"refusing to store {key} without hosts")
        with self._lock:
            self._entries[key] = meta.copy()
            self._changed.add(key)

    def scan(self, keys: Optional[Iterable[str]] = None) -> List[Tuple[str, KeyMetadata]]:
        with self._lock:
            if keys is None:
                keys = list(self._entries)
            return [(key, self._entries[key].copy()) for key in keys if key in self._entries]

    def drain_changed(self) -> Set[str]:
        with self._lock:
            changed, self._changed = self._changed, set()
            return changed

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

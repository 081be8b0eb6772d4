import logging
import threading
from abc import ABC, abstractmethod
from typing import Dict, Iterator, Optional

from ..core.errors import CapacityExceededError

logger = logging.getLogger(__name__)

StoredValue = bytes


class KVBackend(ABC):
    """Data layer of one node; any key-value store can sit behind this interface"""

    @abstractmethod
    def get(self, key: str) -> Optional[StoredValue]:
        """Most recent value for key, or None"""

    @abstractmethod
    def put(self, key: str, value: StoredValue) -> None:
        """Store value under key"""

    @abstractmethod
    def delete(self, key: str) -> bool:
        """Remove key; returns whether it was present"""

    @abstractmethod
    def keys(self) -> Iterator[str]:
        """Snapshot of stored keys"""

    def __contains__(self, key: str) -> bool:
        return self.get(key) is not None


class InMemoryBackend(KVBackend):
    """Dictionary-backed store with optional size bounds"""

    def __init__(self, max_value_bytes: Optional[int] = None, max_keys: Optional[int] = None):
        self.max_value_bytes = max_value_bytes
        self.max_keys = max_keys
        self._data: Dict[str, StoredValue] = {}
        self._lock = threading.Lock()

    def get(self, key: str) -> Optional[StoredValue]:
        # dict reads are atomic; readers never take the writer lock
        return self._data.get(key)

    def put(self, key: str, value: StoredValue) -> None:
        value = bytes(value)
        if self.max_value_bytes is not None and len(value) > self.max_value_bytes:
            raise CapacityExceededError(
                f"value for {key} is {len(value)} bytes, limit is {self.max_value_bytes}"
            )
        with self._lock:
            if self.max_keys is not None and key not in self._data and len(self._data) >= self.max_keys:
                raise CapacityExceededError(f"store holds {self.max_keys} keys, cannot add {key}")
            self._data[key] = value

    def delete(self, key: str) -> bool:
        with self._lock:
            return self._data.pop(key, None) is not None

    def keys(self) -> Iterator[str]:
        with self._lock:
            return iter(list(self._data))

    def __len__(self) -> int:
        return len(self._data)

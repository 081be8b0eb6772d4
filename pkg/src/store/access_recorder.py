import logging
import queue
import threading
from abc import ABC, abstractmethod
from typing import List, Optional

from .metadata_store import AccessEvent, MetadataStore

logger = logging.getLogger(__name__)


class AccessRecorder(ABC):
    """Fire-and-forget sink for access metrics.

    Fetch handlers submit events and return immediately; events become
    visible in the metadata store no later than the next flush(), which the
    placement daemon calls before it scans.
    """

    def __init__(self, metadata: MetadataStore):
        self.metadata = metadata

    @abstractmethod
    def submit(self, event: AccessEvent) -> None:
        """Queue an event without waiting for it to be applied"""

    @abstractmethod
    def flush(self) -> None:
        """Block until every submitted event has been applied"""

    def close(self):
        self.flush()


class DeferredAccessRecorder(AccessRecorder):
    """Buffers events and applies them on flush; deterministic for simulation"""

    def __init__(self, metadata: MetadataStore):
        super().__init__(metadata)
        self._pending: List[AccessEvent] = []
        self._lock = threading.Lock()

    def submit(self, event: AccessEvent) -> None:
        with self._lock:
            self._pending.append(event)

    def flush(self) -> None:
        with self._lock:
            pending, self._pending = self._pending, []
        for event in pending:
            self.metadata.record_access(event)


class BackgroundAccessRecorder(AccessRecorder):
    """Applies events on a worker thread fed by a queue"""

    def __init__(self, metadata: MetadataStore):
        super().__init__(metadata)
        self._queue: "queue.Queue[Optional[AccessEvent]]" = queue.Queue()
        self._running = threading.Event()
        self._running.set()
        self.failures = 0
        self._worker = threading.Thread(target=self._record_loop, name="access-recorder", daemon=True)
        self._worker.start()

    def submit(self, event: AccessEvent) -> None:
        self._queue.put(event)

    def flush(self) -> None:
        self._queue.join()

    def pause(self):
        """Stall the worker; submitted events stay queued until resume()"""
        self._running.clear()

    def resume(self):
        self._running.set()

    def close(self):
        self.resume()
        self._queue.put(None)
        self._worker.join(timeout=5)

    def _record_loop(self):
        while True:
            event = self._queue.get()
            try:
                if event is None:
                    return
                self._running.wait()
                self.metadata.record_access(event)
            except Exception as e:
                self.failures += 1
                logger.warning(f"Failed to record access to {event.key}: {e}")
            finally:
                self._queue.task_done()

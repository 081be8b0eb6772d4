"""
Clocks shared by the simulator, the node service and the placement daemon.

All times are integer milliseconds. The virtual clock only moves when told
to, which makes simulated runs reproducible; the wall clock sleeps instead.
"""

import threading
import time
from abc import ABC, abstractmethod


class Clock(ABC):
    @abstractmethod
    def now(self) -> int:
        """Current time in epoch milliseconds"""

    @abstractmethod
    def advance(self, millis: int) -> int:
        """Let millis pass; returns the new current time"""

    def jump_to(self, millis: int) -> None:
        """Move to an absolute time (virtual clocks only)"""

    @property
    def is_virtual(self) -> bool:
        return False


class VirtualClock(Clock):
    """Time advances only when explicitly stepped"""

    def __init__(self, start_millis: int = 0):
        self._now = start_millis
        self._lock = threading.Lock()

    def now(self) -> int:
        return self._now

    def advance(self, millis: int) -> int:
        if millis < 0:
            raise ValueError("cannot advance by a negative amount")
        with self._lock:
            self._now += millis
            return self._now

    def jump_to(self, millis: int) -> None:
        # stream timelines interleave, so this may move backwards
        with self._lock:
            self._now = millis

    @property
    def is_virtual(self) -> bool:
        return True


class WallClock(Clock):
    """Real time; advance() sleeps"""

    def now(self) -> int:
        return int(time.time() * 1000)

    def advance(self, millis: int) -> int:
        if millis > 0:
            time.sleep(millis / 1000)
        return self.now()

"""Time sources. Simulated components read time only through these."""

from __future__ import annotations

import time


class VirtualClock:
    """Time that moves only when told to. Never goes backwards."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def advance_to(self, t: float) -> float:
        if t > self._now:
            self._now = float(t)
        return self._now

    def advance(self, dt: float) -> float:
        return self.advance_to(self._now + dt)


class WallClock:
    """Monotonic seconds since construction (plus ``start``)."""

    def __init__(self, start: float = 0.0):
        self._origin = time.monotonic() - start

    def now(self) -> float:
        return time.monotonic() - self._origin

    def advance_to(self, t: float) -> float:
        return self.now()


class UnixClock:
    """Seconds since the epoch; shared by separate processes on one host."""

    def now(self) -> float:
        return time.time()

    def advance_to(self, t: float) -> float:
        return self.now()

"""The global chain every simulated node follows."""

from __future__ import annotations

import threading
from dataclasses import replace

from ..model import ChainState


class GlobalChain:
    """Linearizable holder of the shared :class:`ChainState`.

    The head is derived from the state and the clock, so reads never race
    with a writer; ``reset`` swaps the whole state under a lock.
    """

    def __init__(self, state: ChainState | None = None, clock=None):
        from .clock import VirtualClock

        self._state = state or ChainState()
        self.clock = clock or VirtualClock()
        self._lock = threading.Lock()

    @property
    def state(self) -> ChainState:
        return self._state

    @property
    def block_interval(self) -> float:
        return self._state.block_interval

    def head_at(self, t: float) -> int:
        return self._state.head_at(t)

    def head(self) -> int:
        return self._state.head_at(self.clock.now())

    def reset(self, state: ChainState) -> None:
        with self._lock:
            self._state = state

    def rebase(self, head_number: int, at: float) -> None:
        """Make ``head_number`` the head at time ``at``, keeping the cadence."""
        with self._lock:
            self._state = replace(self._state, head_number=head_number, genesis_at=at)

"""Fault modes a simulated node can exhibit and the seeded schedule that picks them."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Mapping

from .. import _kernels
from ..model import TransportError


class FaultMode(enum.Enum):
    # One per client-visible error kind.
    ConnectionRefused = "ConnectionRefused"
    TimeoutAwaitingHeaders = "TimeoutAwaitingHeaders"
    TimeoutReadingBody = "TimeoutReadingBody"
    ConnectionResetByPeer = "ConnectionResetByPeer"
    ServerClosedIdleConnection = "ServerClosedIdleConnection"
    Eof = "Eof"
    UnexpectedEof = "UnexpectedEof"
    MalformedHttpResponse = "MalformedHttpResponse"
    InvalidChunkLength = "InvalidChunkLength"
    InvalidChecksum = "InvalidChecksum"
    InvalidCharacterInResponse = "InvalidCharacterInResponse"
    UnexpectedEndOfJson = "UnexpectedEndOfJson"
    # Behaviors without a single error string.
    STALE_HEAD = "STALE_HEAD"  # one response served from a lagging view
    SYNC_LAG = "SYNC_LAG"  # chain sync stalls for a window
    CRASH = "CRASH"  # process down for the recovery window
    NONE = "NONE"  # tolerated by the client, no visible effect

    @property
    def transport_error(self) -> TransportError | None:
        try:
            return TransportError[self.value]
        except KeyError:
            return None

    @property
    def per_request(self) -> bool:
        return self not in (FaultMode.SYNC_LAG, FaultMode.CRASH, FaultMode.NONE)


PER_REQUEST_MODES: tuple[FaultMode, ...] = tuple(m for m in FaultMode if m.per_request)


def _check_prob(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} probability {p} outside [0, 1]")


@dataclass(frozen=True)
class SimNodeFaultConfig:
    """Immutable fault settings for one simulated node.

    ``probabilities`` holds per-request modes plus ``CRASH``. Per-request
    modes are drawn once per request id; crash onsets and sync-lag onsets
    are drawn once per ``tick`` of node time, so a node's down/stalled
    periods do not depend on which requests happened to reach it.
    """

    probabilities: Mapping[FaultMode, float] = field(default_factory=dict)
    crash_window: float = 30.0  # s
    sync_lag_probability: float = 0.0
    sync_lag_window: float = 60.0  # s
    tick: float = 0.005  # s
    seed: int = 0

    def __post_init__(self) -> None:
        probs = {FaultMode(k) if not isinstance(k, FaultMode) else k: float(v)
                 for k, v in dict(self.probabilities).items()}
        for mode, p in probs.items():
            if mode in (FaultMode.SYNC_LAG, FaultMode.NONE):
                raise ValueError(f"{mode.name} is not a per-request/crash probability")
            _check_prob(mode.name, p)
        _check_prob("sync_lag", self.sync_lag_probability)
        if sum(p for m, p in probs.items() if m.per_request) > 1.0 + 1e-12:
            raise ValueError("per-request fault probabilities sum above 1")
        if probs.get(FaultMode.CRASH, 0.0) + self.sync_lag_probability > 1.0 + 1e-12:
            raise ValueError("crash + sync-lag probabilities sum above 1")
        if self.crash_window < 0 or self.sync_lag_window < 0 or not self.tick > 0:
            raise ValueError("windows must be >= 0 and tick > 0")
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def none(cls, seed: int = 0) -> "SimNodeFaultConfig":
        return cls({}, seed=seed)

    def scaled(self, multipliers: Mapping[str, float], window_scale: float = 1.0) -> "SimNodeFaultConfig":
        """Apply per-mode susceptibility multipliers, renormalizing if needed."""
        probs = {m: min(1.0, p * multipliers.get(m.value, 1.0)) for m, p in self.probabilities.items()}
        lag = min(1.0, self.sync_lag_probability * multipliers.get(FaultMode.SYNC_LAG.value, 1.0))
        probs = _renormalize(probs, lag)
        lag = min(lag, 1.0 - probs.get(FaultMode.CRASH, 0.0))
        return SimNodeFaultConfig(
            probs,
            crash_window=self.crash_window * window_scale,
            sync_lag_probability=lag,
            sync_lag_window=self.sync_lag_window,
            tick=self.tick,
            seed=self.seed,
        )

    def request_modes(self) -> list[tuple[FaultMode, float]]:
        return [(m, self.probabilities[m]) for m in PER_REQUEST_MODES
                if self.probabilities.get(m, 0.0) > 0.0]

    def tick_modes(self) -> list[tuple[FaultMode, float]]:
        out = []
        if self.probabilities.get(FaultMode.CRASH, 0.0) > 0.0:
            out.append((FaultMode.CRASH, self.probabilities[FaultMode.CRASH]))
        if self.sync_lag_probability > 0.0:
            out.append((FaultMode.SYNC_LAG, self.sync_lag_probability))
        return out

    def to_dict(self) -> dict:
        return {
            "probabilities": {m.value: p for m, p in sorted(
                self.probabilities.items(), key=lambda kv: kv[0].value)},
            "crash_window": self.crash_window,
            "sync_lag_probability": self.sync_lag_probability,
            "sync_lag_window": self.sync_lag_window,
            "tick": self.tick,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimNodeFaultConfig":
        return cls(
            {FaultMode(k): v for k, v in d.get("probabilities", {}).items()},
            crash_window=d.get("crash_window", 30.0),
            sync_lag_probability=d.get("sync_lag_probability", 0.0),
            sync_lag_window=d.get("sync_lag_window", 60.0),
            tick=d.get("tick", 0.005),
            seed=d.get("seed", 0),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _renormalize(probs: dict, lag: float) -> dict:
    per_req = {m: p for m, p in probs.items() if m.per_request}
    total = sum(per_req.values())
    if total > 1.0:
        for m in per_req:
            probs[m] = per_req[m] / total
    crash = probs.get(FaultMode.CRASH, 0.0)
    if crash + lag > 1.0:
        probs[FaultMode.CRASH] = crash / (crash + lag)
    return probs


class ModeSchedule:
    """Seeded categorical draw per slot index, materialized in blocks.

    ``mode_at(i)`` is a pure function of (key, modes, i); blocks exist only
    so the compiled kernel amortizes call overhead.
    """

    BLOCK = 4096

    def __init__(self, key: int, modes: list[tuple[FaultMode, float]]):
        self.key = key
        self.modes = [m for m, _ in modes]
        acc = 0.0
        self.cumulative = []
        for _, p in modes:
            acc += p
            self.cumulative.append(acc)
        self._blocks: dict[int, object] = {}

    def mode_at(self, index: int) -> FaultMode | None:
        if not self.modes:
            return None
        b, off = divmod(index, self.BLOCK)
        block = self._blocks.get(b)
        if block is None:
            block = _kernels.draw_modes(self.key, b * self.BLOCK, self.BLOCK, self.cumulative)
            if len(self._blocks) > 64:
                self._blocks.clear()
            self._blocks[b] = block
        m = block[off]
        return None if m < 0 else self.modes[m]

    def indices(self, start: int, count: int):
        """Raw mode indices for a run of slots (-1 means no fault)."""
        return _kernels.draw_modes(self.key, start, count, self.cumulative)

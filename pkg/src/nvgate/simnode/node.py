"""A simulated execution-layer node with seeded, persona-specific faults."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

from .. import _kernels
from ..model import RpcRequest, TransportError
from .chain import GlobalChain
from .faults import FaultMode, ModeSchedule, SimNodeFaultConfig
from .state import response_body

REFUSAL_MS = 0.2


@dataclass(frozen=True)
class SimNodeProfile:
    """Client persona: baseline latency and how strongly each fault bites.

    ``susceptibility`` multiplies the configured probability of a fault
    mode (keyed by mode value); absent modes use 1.0.
    """

    label: str
    latency_min_ms: float = 2.0
    latency_max_ms: float = 20.0
    susceptibility: Mapping[str, float] = field(default_factory=dict)
    crash_window_scale: float = 1.0
    catch_up_delay: float = 0.0  # s after restart before the head re-syncs
    stale_lag_min: int = 3
    stale_lag_max: int = 8
    stall_ms: float = 30_000.0  # how long a hung response stalls

    def __post_init__(self) -> None:
        if not (0 < self.latency_min_ms <= self.latency_max_ms):
            raise ValueError("latency parameters must be positive and ordered")
        if self.stale_lag_min < 1 or self.stale_lag_max < self.stale_lag_min:
            raise ValueError("stale lag range must be >= 1 and ordered")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimNodeProfile":
        return cls(
            label=d["label"],
            latency_min_ms=d.get("latency_min_ms", 2.0),
            latency_max_ms=d.get("latency_max_ms", 20.0),
            susceptibility=dict(d.get("susceptibility", {})),
            crash_window_scale=d.get("crash_window_scale", 1.0),
            catch_up_delay=d.get("catch_up_delay", 0.0),
            stale_lag_min=d.get("stale_lag_min", 3),
            stale_lag_max=d.get("stale_lag_max", 8),
            stall_ms=d.get("stall_ms", 30_000.0),
        )


def builtin_personas() -> dict[str, SimNodeProfile]:
    text = resources.files("nvgate").joinpath("data").joinpath("personas.json").read_text(encoding="utf-8")
    return {d["label"]: SimNodeProfile.from_dict(d) for d in json.loads(text)["personas"]}


@dataclass(frozen=True, slots=True)
class Served:
    """What the node did with one request.

    ``body`` is what a client would read; ``error`` is set instead when the
    client gets no usable body. ``latency_ms`` is time until the client sees
    the outcome (for stalls, how long the node would hang).
    """

    body: bytes | None
    error: TransportError | None
    latency_ms: float
    mode: FaultMode | None
    head: int | None = None


def _seq(request_id) -> int:
    if isinstance(request_id, int):
        return request_id
    return _kernels.derive_key(0, request_id)


class SimNode:
    """Serves the JSON-RPC pool against the global chain.

    Per-request faults are drawn from the request id; crash and sync-lag
    onsets are drawn per tick of node time and processed lazily, in tick
    order, whenever the node is touched. Node state at time ``t`` therefore
    depends only on (config, seed, t), not on which requests it received.
    """

    def __init__(
        self,
        node_id: str,
        chain: GlobalChain,
        profile: SimNodeProfile | None = None,
        faults: SimNodeFaultConfig | None = None,
    ):
        self.node_id = node_id
        self.chain = chain
        self.profile = profile or SimNodeProfile(node_id)
        self.journal: list = []
        self.load_faults(faults or SimNodeFaultConfig.none())

    # configuration ------------------------------------------------------

    def load_faults(self, faults: SimNodeFaultConfig, now: float | None = None) -> None:
        self.base_faults = faults
        self.faults = faults.scaled(self.profile.susceptibility, self.profile.crash_window_scale)
        seed = faults.seed
        label = self.profile.label
        self._req_sched = ModeSchedule(_kernels.derive_key(seed, label, "request"), self.faults.request_modes())
        self._tick_sched = ModeSchedule(_kernels.derive_key(seed, label, "tick"), self.faults.tick_modes())
        self._lat_key = _kernels.derive_key(seed, label, "latency")
        self._aux_key = _kernels.derive_key(seed, label, "aux")
        t = self.chain.clock.now() if now is None else now
        self.reset_state(t)

    def reset_state(self, now: float, local_head: int | None = None) -> None:
        """Running, no pending windows; ticks before ``now`` are skipped.

        A ``local_head`` behind the chain is held for the persona's
        catch-up delay, as after a restart from an older copy of the state.
        """
        self._tick_done = math.floor(now / self.faults.tick)
        self.crashed_until = -math.inf
        self._frozen_head: int | None = None
        self._frozen_until = -math.inf
        self.crash_count = 0
        self.sync_lag_count = 0
        if local_head is not None and local_head < self.chain.head_at(now):
            self._frozen_head = local_head
            self._frozen_until = now + self.profile.catch_up_delay

    # chain following ------------------------------------------------------

    def _freeze(self, t: float, until: float) -> None:
        if self._frozen_head is None:
            self._frozen_head = self.chain.head_at(t)
        self._frozen_until = max(self._frozen_until, until)

    def _maybe_thaw(self, t: float) -> None:
        if self._frozen_head is not None and t >= self._frozen_until:
            self._frozen_head = None

    def advance_chain(self, now: float) -> int:
        """Process tick events up to ``now`` and return the local head."""
        target = math.floor(now / self.faults.tick)
        if target > self._tick_done:
            if self._tick_sched.modes:
                self._run_ticks(self._tick_done + 1, target)
            self._tick_done = target
        self._maybe_thaw(now)
        return self.chain.head_at(now) if self._frozen_head is None else self._frozen_head

    def _run_ticks(self, first: int, last: int) -> None:
        tick = self.faults.tick
        modes = self._tick_sched.modes
        start = first
        while start <= last:
            count = min(ModeSchedule.BLOCK, last - start + 1)
            drawn = self._tick_sched.indices(start, count)
            for off, m in enumerate(drawn):
                if m < 0:
                    continue
                t = (start + off) * tick
                if t < self.crashed_until:
                    continue
                self._maybe_thaw(t)
                if modes[m] is FaultMode.CRASH:
                    self._crash_at(t, self.faults.crash_window)
                elif t >= self._frozen_until:
                    self.sync_lag_count += 1
                    self._freeze(t, t + self.faults.sync_lag_window)
            start += count

    def local_head(self, now: float) -> int:
        return self.advance_chain(now)

    def is_crashed(self, now: float) -> bool:
        self.advance_chain(now)
        return now < self.crashed_until

    # crash / restore ------------------------------------------------------

    def _crash_at(self, t: float, duration: float) -> None:
        self.crash_count += 1
        self.crashed_until = t + duration
        self._freeze(t, self.crashed_until + self.profile.catch_up_delay)

    def crash(self, now: float, duration: float) -> None:
        self.advance_chain(now)
        self._crash_at(now, duration)

    def restore(self, now: float, catch_up_delay: float | None = None) -> None:
        self.advance_chain(now)
        delay = self.profile.catch_up_delay if catch_up_delay is None else catch_up_delay
        self.crashed_until = now
        if self._frozen_head is not None:
            self._frozen_until = now + delay
        self._maybe_thaw(now)

    # serving ------------------------------------------------------------

    def _latency(self, seq: int) -> float:
        p = self.profile
        return p.latency_min_ms + _kernels.uniform(self._lat_key, seq) * (p.latency_max_ms - p.latency_min_ms)

    def serve(self, req: RpcRequest, now: float) -> Served:
        head = self.advance_chain(now)
        self.journal.append(req.id)
        if now < self.crashed_until:
            return Served(None, TransportError.ConnectionRefused, REFUSAL_MS, FaultMode.CRASH)
        seq = _seq(req.id)
        mode = self._req_sched.mode_at(seq)
        latency = self._latency(seq)
        if mode is None:
            return Served(response_body(req.id, req.method, req.params, head), None, latency, None, head)
        if mode is FaultMode.STALE_HEAD:
            p = self.profile
            span = p.stale_lag_max - p.stale_lag_min + 1
            lag = p.stale_lag_min + int(_kernels.uniform(self._aux_key, seq) * span)
            stale = max(0, head - lag)
            return Served(response_body(req.id, req.method, req.params, stale), None, latency, mode, stale)
        if mode is FaultMode.ConnectionRefused:
            return Served(None, TransportError.ConnectionRefused, REFUSAL_MS, mode)
        if mode in (FaultMode.TimeoutAwaitingHeaders, FaultMode.TimeoutReadingBody):
            return Served(None, mode.transport_error, self.profile.stall_ms, mode)
        if mode is FaultMode.InvalidCharacterInResponse:
            body = bytearray(response_body(req.id, req.method, req.params, head))
            off = 1 + int(_kernels.uniform(self._aux_key, seq) * (len(body) - 2))
            body[off] = 0x01
            return Served(bytes(body), None, latency, mode, head)
        if mode is FaultMode.UnexpectedEndOfJson:
            body = response_body(req.id, req.method, req.params, head)
            cut = 1 + int(_kernels.uniform(self._aux_key, seq) * (len(body) - 2))
            return Served(body[:cut], None, latency, mode, head)
        return Served(None, mode.transport_error, latency, mode)

    def full_response(self, req: RpcRequest, now: float) -> bytes:
        """Healthy body at the current local head (used by wire-level faults)."""
        return response_body(req.id, req.method, req.params, self.advance_chain(now))


def gzip_with_bad_crc(payload: bytes) -> bytes:
    """gzip member whose CRC32 trailer is wrong."""
    comp = zlib.compressobj(6, zlib.DEFLATED, 31)
    data = bytearray(comp.compress(payload) + comp.flush())
    data[-8] ^= 0xFF
    return bytes(data)

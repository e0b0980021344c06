"""Open-loop workloads, verdict logging and availability summaries.

Workload A samples (method, params) uniformly from the 21-method read pool;
Workload B repeats the latest-head query. Requests go out at a fixed
spacing and are never retried here.
"""

from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence, TextIO

from . import _kernels
from .classifier import AvailabilityVerdict, Status
from .methods import HEAD_QUERY, METHOD_POOL
from .model import RpcExchange, RpcRequest, TransportError
from .simnode import state as chain_data

FULL_SCALE_REQUESTS = 360_000
DEFAULT_INTERVAL_MS = 5.0
DESK_REQUESTS = 10_000
HISTORY_WINDOW = 1000  # blocks sampled back from the head


class WorkloadKind(str, enum.Enum):
    A = "A"
    B = "B"


@dataclass(frozen=True)
class WorkloadSpec:
    kind: WorkloadKind = WorkloadKind.B
    total_requests: int = FULL_SCALE_REQUESTS
    interval_ms: float = DEFAULT_INTERVAL_MS
    seed: int = 0
    target: str = ""
    method_pool: tuple[str, ...] = METHOD_POOL

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", WorkloadKind(self.kind))
        if not self.interval_ms > 0:
            raise ValueError("interval must be > 0")
        if self.total_requests < 0:
            raise ValueError("total_requests must be >= 0")
        if self.kind is WorkloadKind.B:
            object.__setattr__(self, "method_pool", (HEAD_QUERY[0],))
        elif not self.method_pool or any(m not in METHOD_POOL for m in self.method_pool):
            raise ValueError("kind A pool must be a non-empty subset of the method pool")

    @property
    def duration_s(self) -> float:
        return self.total_requests * self.interval_ms / 1000.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "total_requests": self.total_requests,
            "interval_ms": self.interval_ms,
            "seed": self.seed,
            "target": self.target,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadSpec":
        return cls(
            kind=d.get("kind", "B"),
            total_requests=d.get("total_requests", DESK_REQUESTS),
            interval_ms=d.get("interval_ms", DEFAULT_INTERVAL_MS),
            seed=d.get("seed", 0),
            target=d.get("target", ""),
        )


@dataclass(frozen=True, slots=True)
class ScheduledRequest:
    send_at: float  # seconds from workload start
    request: RpcRequest


class _Draws:
    def __init__(self, key: int, index: int):
        self.key = key
        self.base = index << 4
        self.n = 0

    def __call__(self) -> float:
        u = _kernels.uniform(self.key, self.base + self.n)
        self.n += 1
        return u


def sample_params(method: str, head: int, draw: Callable[[], float]) -> tuple:
    """Parameters for one pool method, reaching back up to 1000 blocks."""

    def block() -> int:
        return max(0, head - int(draw() * HISTORY_WINDOW))

    def tx_ref() -> tuple[int, int]:
        b = block()
        n = chain_data.tx_count(b)
        return b, int(draw() * max(1, n))

    def addr() -> str:
        return chain_data.address(int(draw() * 64))

    if method in ("eth_blockNumber", "eth_gasPrice"):
        return ()
    if method == "eth_estimateGas":
        return ({"from": addr(), "to": addr(), "value": hex(int(draw() * 10**6))},)
    if method == "eth_feeHistory":
        return (hex(1 + int(draw() * 8)), hex(block()), [25, 75])
    if method in ("eth_getBalance", "eth_getCode", "eth_getTransactionCount"):
        return (addr(), hex(block()) if draw() < 0.5 else "latest")
    if method == "eth_getStorageAt":
        return (addr(), hex(int(draw() * 8)), hex(block()))
    if method == "eth_getBlockByHash":
        return (chain_data.block_hash(block()), draw() < 0.5)
    if method == "eth_getBlockByNumber":
        return (hex(block()), draw() < 0.5)
    if method in ("eth_getBlockTransactionCountByHash", "eth_getUncleCountByBlockHash"):
        return (chain_data.block_hash(block()),)
    if method in ("eth_getBlockTransactionCountByNumber", "eth_getUncleCountByBlockNumber"):
        return (hex(block()),)
    if method == "eth_getLogs":
        b = block()
        return ({"fromBlock": hex(b), "toBlock": hex(min(head, b + int(draw() * 4)))},)
    if method == "eth_getTransactionByBlockHashAndIndex":
        b, i = tx_ref()
        return (chain_data.block_hash(b), hex(i))
    if method == "eth_getTransactionByBlockNumberAndIndex":
        b, i = tx_ref()
        return (hex(b), hex(i))
    if method in ("eth_getTransactionByHash", "eth_getTransactionReceipt"):
        return (chain_data.tx_hash(*tx_ref()),)
    if method == "eth_getUncleByBlockHashAndIndex":
        return (chain_data.block_hash(block()), "0x0")
    if method == "eth_getUncleByBlockNumberAndIndex":
        return (hex(block()), "0x0")
    raise ValueError(f"no parameter sampler for {method}")


def generate(spec: WorkloadSpec, head_at: Callable[[float], int] | None = None,
             start: float = 0.0) -> Iterator[ScheduledRequest]:
    """Requests at ``start + (id - 1) * interval``; ids run 1..total_requests.

    ``head_at(t)`` supplies the chain head used to pick historical
    parameters for kind A.
    """
    step = spec.interval_ms / 1000.0
    if spec.kind is WorkloadKind.B:
        method, params = HEAD_QUERY
        for i in range(1, spec.total_requests + 1):
            yield ScheduledRequest(start + (i - 1) * step, RpcRequest(method, params, i))
        return
    key = _kernels.derive_key(spec.seed, "workload-A")
    pool = spec.method_pool
    for i in range(1, spec.total_requests + 1):
        t = start + (i - 1) * step
        draw = _Draws(key, i)
        method = pool[min(len(pool) - 1, int(draw() * len(pool)))]
        head = head_at(t) if head_at is not None else 0
        yield ScheduledRequest(t, RpcRequest(method, sample_params(method, head, draw), i))


@dataclass(frozen=True, slots=True)
class LogRecord:
    request_id: int
    timestamp: float
    target: str | None
    method: str
    verdict: AvailabilityVerdict
    error_kind: TransportError | None = None
    e2e_ms: float | None = None

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "timestamp": self.timestamp,
            "target": self.target,
            "method": self.method,
            "status": self.verdict.status.name,
            "t_r": self.verdict.t_r,
            "c_r": self.verdict.c_r,
            "f_r": self.verdict.f_r,
            "error_kind": self.error_kind.value if self.error_kind else None,
            "e2e_ms": self.e2e_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogRecord":
        return cls(
            d["request_id"],
            d["timestamp"],
            d["target"],
            d["method"],
            AvailabilityVerdict(Status[d["status"]], d["t_r"], d["c_r"], d["f_r"]),
            TransportError(d["error_kind"]) if d.get("error_kind") else None,
            d.get("e2e_ms"),
        )


class VerdictLog:
    """Append-only verdict stream, ordered by request id.

    Records may arrive out of order (concurrent in-flight requests); they
    are held back until every smaller id has arrived, then written. With a
    sink, each released record is one JSON line, flushed immediately.
    """

    def __init__(self, sink: str | Path | TextIO | None = None, first_id: int = 1):
        self.records: list[LogRecord] = []
        self._pending: dict[int, LogRecord] = {}
        self._next = first_id
        self._owns = False
        if isinstance(sink, (str, Path)):
            Path(sink).parent.mkdir(parents=True, exist_ok=True)
            self._sink = open(sink, "w", encoding="utf-8")
            self._owns = True
        else:
            self._sink = sink

    def append(self, rec: LogRecord) -> None:
        if rec.request_id < self._next or rec.request_id in self._pending:
            raise ValueError(f"request id {rec.request_id} already recorded")
        self._pending[rec.request_id] = rec
        while self._next in self._pending:
            r = self._pending.pop(self._next)
            self.records.append(r)
            if self._sink is not None:
                self._sink.write(json.dumps(r.to_dict(), separators=(",", ":")) + "\n")
                self._sink.flush()
            self._next += 1

    @property
    def pending(self) -> int:
        return len(self._pending)

    def __len__(self) -> int:
        return len(self.records) + len(self._pending)

    def close(self) -> None:
        if self._owns and self._sink is not None:
            self._sink.close()
            self._sink = None

    def __enter__(self) -> "VerdictLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @classmethod
    def read(cls, path: str | Path) -> list[LogRecord]:
        with open(path, encoding="utf-8") as fh:
            return [LogRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def record(log: VerdictLog, exchange: RpcExchange, verdict: AvailabilityVerdict,
           error_kind: TransportError | None = None, e2e_ms: float | None = None,
           target: str | None = None) -> VerdictLog:
    if error_kind is None:
        error_kind = exchange.error
    log.append(LogRecord(
        request_id=exchange.request.id,
        timestamp=exchange.sent_at,
        target=target if target is not None else exchange.sub_node_id,
        method=exchange.request.method,
        verdict=verdict,
        error_kind=error_kind,
        e2e_ms=e2e_ms,
    ))
    return log


@dataclass(frozen=True)
class Summary:
    total: int
    available: float
    degraded: float
    unavailable: float
    counts: dict[str, int]
    errors: dict[str, int] = field(default_factory=dict)
    per_method: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def rates(self) -> tuple[float, float, float]:
        return (self.available, self.degraded, self.unavailable)

    def method_error_rates(self) -> dict[str, float]:
        """Share of calls per method that surfaced a client-visible error."""
        return {m: c.get("errors", 0) / c["total"] for m, c in self.per_method.items() if c["total"]}

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "available": self.available,
            "degraded": self.degraded,
            "unavailable": self.unavailable,
            "counts": dict(self.counts),
            "errors": dict(self.errors),
            "per_method": {m: dict(c) for m, c in self.per_method.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Summary":
        return cls(d["total"], d["available"], d["degraded"], d["unavailable"],
                   dict(d["counts"]), dict(d.get("errors", {})),
                   {m: dict(c) for m, c in d.get("per_method", {}).items()})


def summarize(records: VerdictLog | Sequence[LogRecord]) -> Summary:
    recs = records.records if isinstance(records, VerdictLog) else records
    if not recs:
        raise ValueError("cannot summarize an empty log")
    counts = Counter(r.verdict.status.name for r in recs)
    errors = Counter(r.error_kind.value for r in recs if r.error_kind is not None)
    per_method: dict[str, Counter] = {}
    for r in recs:
        c = per_method.setdefault(r.method, Counter())
        c["total"] += 1
        c[r.verdict.status.name] += 1
        if r.error_kind is not None:
            c["errors"] += 1
    n = len(recs)
    return Summary(
        total=n,
        available=counts["AVAILABLE"] / n,
        degraded=counts["DEGRADED"] / n,
        unavailable=counts["UNAVAILABLE"] / n,
        counts={s.name: counts[s.name] for s in Status},
        errors=dict(sorted(errors.items())),
        per_method={m: dict(c) for m, c in sorted(per_method.items())},
    )


def status_timeline(records: Sequence[LogRecord]) -> list[tuple[float, Status]]:
    """Change points of the held status: (receipt time, new status).

    A target holds the status of its latest response until the next one
    arrives, so the series is a step function that can only change at a
    receipt time.
    """
    events = sorted((r.timestamp + r.verdict.t_r / 1000.0, r.request_id, r.verdict.status) for r in records)
    out: list[tuple[float, Status]] = []
    for t, _, status in events:
        if not out or out[-1][1] is not status:
            out.append((t, status))
    return out


def status_at(timeline: Sequence[tuple[float, Status]], t: float) -> Status | None:
    """Held status at time ``t`` (None before the first response)."""
    held = None
    for when, status in timeline:
        if when > t:
            break
        held = status
    return held


def rates_close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=0, abs_tol=1e-12)

"""Per-response availability status: timeliness, compliance, freshness."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

from .methods import reported_head, result_matches
from .model import (
    ClassifierConfig,
    ParseFailure,
    RpcExchange,
    RpcRequest,
    RpcResponse,
    parse_rpc_response,
)


class Status(enum.IntEnum):
    """Ordered worst to best, so ``max`` picks the better status."""

    UNAVAILABLE = 0
    DEGRADED = 1
    AVAILABLE = 2


@dataclass(frozen=True, slots=True)
class AvailabilityVerdict:
    status: Status
    t_r: float
    c_r: bool
    f_r: int | None

    def to_record(self, request_id, sub_node_id: str | None) -> dict:
        return {
            "request_id": request_id,
            "sub_node_id": sub_node_id,
            "status": self.status.name,
            "t_r": self.t_r,
            "c_r": self.c_r,
            "f_r": self.f_r,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "AvailabilityVerdict":
        return cls(Status[rec["status"]], rec["t_r"], rec["c_r"], rec["f_r"])


def freshness(node_head: int, oracle_head: int) -> int:
    """Blocks the node lags behind the oracle; a node ahead counts as 0."""
    return max(0, oracle_head - node_head)


def _compliant(parsed: RpcResponse | ParseFailure, method: str) -> bool:
    if isinstance(parsed, ParseFailure):
        return False
    if parsed.is_error:
        return True
    ok = result_matches(method, parsed.result)
    return True if ok is None else ok


def check_compliance(raw: bytes, method: str) -> bool:
    """JSON-RPC 2.0 envelope plus the method's result schema.

    Methods without a registered schema are judged on the envelope alone.
    """
    return _compliant(parse_rpc_response(raw), method)


def assess_body(raw: bytes, request: RpcRequest, oracle_head: int):
    """Return ``(c_r, f_r, parsed)`` for a received body."""
    parsed = parse_rpc_response(raw)
    c_r = _compliant(parsed, request.method)
    if not c_r:
        return False, None, parsed
    head = None if parsed.is_error else reported_head(request.method, request.params, parsed.result)
    f_r = 0 if head is None else freshness(head, oracle_head)
    return True, f_r, parsed


def classify(exchange: RpcExchange, oracle_head: int, config: ClassifierConfig) -> AvailabilityVerdict:
    """Status of one response.

    A transport error means nothing usable arrived (denied, reset, hung),
    which is UNAVAILABLE whatever the elapsed time. A body that arrived
    after ``T`` is UNAVAILABLE too, with compliance and freshness still
    filled in for diagnostics.
    """
    return classify_detailed(exchange, oracle_head, config)[0]


def status_from_parts(t_r: float, c_r: bool, f_r: int | None, denied: bool, config: ClassifierConfig) -> Status:
    """The three-way rule on already-measured parts."""
    if denied or t_r > config.T:
        return Status.UNAVAILABLE
    if c_r and f_r is not None and f_r <= config.F:
        return Status.AVAILABLE
    return Status.DEGRADED


def verdict_json(verdict: AvailabilityVerdict, request_id, sub_node_id) -> str:
    return json.dumps(verdict.to_record(request_id, sub_node_id), separators=(",", ":"))


def classify_detailed(exchange: RpcExchange, oracle_head: int, config: ClassifierConfig):
    """Verdict plus the client-visible error kind, if any."""
    if exchange.error is not None:
        return AvailabilityVerdict(Status.UNAVAILABLE, exchange.t_r, False, None), exchange.error
    c_r, f_r, parsed = assess_body(exchange.raw_response, exchange.request, oracle_head)
    kind = parsed.error_kind if isinstance(parsed, ParseFailure) else None
    if exchange.t_r > config.T:
        return AvailabilityVerdict(Status.UNAVAILABLE, exchange.t_r, c_r, f_r), kind
    if c_r and f_r <= config.F:
        return AvailabilityVerdict(Status.AVAILABLE, exchange.t_r, True, f_r), kind
    return AvailabilityVerdict(Status.DEGRADED, exchange.t_r, c_r, f_r), kind

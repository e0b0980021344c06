"""Turning what a node did into what a client observed."""

from __future__ import annotations

from .model import RpcExchange, RpcRequest, TransportError
from .simnode.node import Served, SimNode


def observe(req: RpcRequest, served: Served, sent_at: float, timeout_ms: float,
            sub_node_id: str | None = None) -> RpcExchange:
    """Apply a client timeout to a node outcome.

    Anything slower than ``timeout_ms`` is abandoned at ``timeout_ms``.
    """
    if served.latency_ms > timeout_ms:
        kind = (TransportError.TimeoutReadingBody
                if served.error is TransportError.TimeoutReadingBody
                else TransportError.TimeoutAwaitingHeaders)
        return RpcExchange(req, None, kind, timeout_ms, sent_at, sub_node_id)
    if served.error is not None:
        return RpcExchange(req, None, served.error, served.latency_ms, sent_at, sub_node_id)
    return RpcExchange(req, served.body, None, served.latency_ms, sent_at, sub_node_id)


class InProcessTransport:
    """Calls simulated nodes directly, in virtual time."""

    def __init__(self, nodes: dict[str, SimNode], timeout_ms: float):
        self.nodes = nodes
        self.timeout_ms = timeout_ms

    def call(self, sid: str, req: RpcRequest, now: float) -> RpcExchange:
        served = self.nodes[sid].serve(req, now)
        return observe(req, served, now, self.timeout_ms, sid)

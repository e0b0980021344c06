"""In-process deployments driven in virtual time.

A deployment answers one request at its send instant. For the N-version
deployment every retry of a request is evaluated against node state at
that same instant; attempt latencies still add up into the end-to-end time
that is logged alongside the verdict.
"""

from __future__ import annotations

from typing import Sequence

from .classifier import classify_detailed
from .model import ClassifierConfig, RpcExchange, RpcRequest
from .proxy.core import Dispatcher, ProxyOutcome
from .simnode.chain import GlobalChain
from .simnode.node import SimNode
from .transport import InProcessTransport, observe
from .workload import LogRecord, Summary, VerdictLog, WorkloadSpec, generate, summarize


class SingleDeployment:
    def __init__(self, node: SimNode, timeout_ms: float):
        self.node = node
        self.timeout_ms = timeout_ms
        self.name = node.node_id

    @property
    def nodes(self) -> list[SimNode]:
        return [self.node]

    def call(self, req: RpcRequest, now: float) -> tuple[RpcExchange, float]:
        ex = observe(req, self.node.serve(req, now), now, self.timeout_ms, self.node.node_id)
        return ex, ex.t_r


class NVersionDeployment:
    def __init__(self, nodes: Sequence[SimNode], chain: GlobalChain,
                 config: ClassifierConfig, window: int | None = None, name: str | None = None):
        self._nodes = list(nodes)
        self.chain = chain
        self.dispatcher = Dispatcher([n.node_id for n in self._nodes], config, window=window)
        # Per-attempt timeout is the timeliness bound.
        self.transport = InProcessTransport({n.node_id: n for n in self._nodes}, config.T)
        self.name = name or "+".join(n.node_id for n in self._nodes)
        self.last_outcome: ProxyOutcome | None = None

    @property
    def nodes(self) -> list[SimNode]:
        return self._nodes

    def call(self, req: RpcRequest, now: float) -> tuple[RpcExchange, float]:
        transport = self.transport
        outcome = self.dispatcher.handle(
            req, lambda sid, r: transport.call(sid, r, now), self.chain.head_at(now)
        )
        self.last_outcome = outcome
        e2e = sum(c.verdict.t_r for c in outcome.attempts)
        chosen = outcome.chosen
        ex = RpcExchange(req, chosen.raw_response, chosen.error, chosen.verdict.t_r, now, chosen.sub_node_id)
        return ex, e2e


def run_virtual(spec: WorkloadSpec, deployment, chain: GlobalChain, config: ClassifierConfig,
                log: VerdictLog | None = None, start: float | None = None) -> tuple[Summary, VerdictLog]:
    """Drive a workload against an in-process deployment on a virtual clock.

    Each exchange is classified against the global head at receipt time.
    """
    log = log if log is not None else VerdictLog()
    clock = chain.clock
    t0 = clock.now() if start is None else start
    head_at = chain.head_at
    for item in generate(spec, head_at, t0):
        now = item.send_at
        clock.advance_to(now)
        ex, e2e = deployment.call(item.request, now)
        verdict, kind = classify_detailed(ex, head_at(now + ex.t_r / 1000.0), config)
        log.append(LogRecord(item.request.id, now, deployment.name, item.request.method, verdict, kind, e2e))
    return summarize(log), log

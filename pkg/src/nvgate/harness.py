"""Wall-clock experiment cells: real sockets, real time.

Each cell boots one HTTP sim node per persona (and a gateway for
combinations) on ephemeral ports, sharing one chain that starts from the
strategy's snapshot head at the moment of boot.
"""

from __future__ import annotations

import time
from contextlib import ExitStack
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .model import ChainState
from .net.proxyserver import ProxyConfig, ProxyServer
from .net.runner import run_http
from .net.simserver import SimNodeServer
from .simnode.chain import GlobalChain
from .simnode.clock import UnixClock
from .workload import VerdictLog


def run_wall_clock_cell(plan, members: Sequence[str], strategy: int, log_file: Path | None) -> VerdictLog:
    from .orchestrator import build_nodes

    chain = GlobalChain(clock=UnixClock())
    nodes = build_nodes(plan, members, strategy, chain)
    snap = plan.snapshot(strategy)
    boot = time.time()
    chain.reset(replace(snap.chain, genesis_at=boot))
    for n in nodes:
        n.reset_state(boot)
    with ExitStack() as stack:
        servers = [stack.enter_context(SimNodeServer(n)) for n in nodes]
        if len(servers) == 1:
            target = servers[0].url
        else:
            cfg = ProxyConfig(tuple((n.node_id, s.url) for n, s in zip(nodes, servers)),
                              plan.classifier.T, plan.classifier.F, plan.window, port=0)
            proxy = stack.enter_context(ProxyServer(cfg, oracle=lambda: chain.head_at(time.time())))
            target = proxy.url
        log = stack.enter_context(VerdictLog(log_file))
        run_http(plan.workload, target, plan.classifier,
                 oracle=lambda: chain.head_at(time.time()), log=log,
                 timeout_ms=plan.classifier.T * (len(nodes) + 1))
        return log


def boot_chain(head_number: int, block_interval: float, genesis_at: float | None = None) -> GlobalChain:
    return GlobalChain(ChainState(head_number, block_interval, time.time() if genesis_at is None else genesis_at),
                       UnixClock())

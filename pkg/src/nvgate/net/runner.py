"""Open-loop workload over HTTP on the wall clock."""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

from ..classifier import classify_detailed
from ..model import ClassifierConfig, RpcExchange, TransportError
from ..workload import LogRecord, Summary, VerdictLog, WorkloadSpec, generate, summarize
from .client import UPSTREAM_MS, call, post_json
from .proxyserver import HighestSeen, _reported


@dataclass
class RunStats:
    summary: Summary
    send_lag_ms: list[float]  # actual minus scheduled send time, per request

    @property
    def lag_p99_ms(self) -> float:
        lags = sorted(self.send_lag_ms)
        return lags[min(len(lags) - 1, int(0.99 * len(lags)))] if lags else 0.0


def _sleep_until(deadline: float) -> None:
    while True:
        left = deadline - time.perf_counter()
        if left <= 0:
            return
        # coarse sleep, then a short spin for the last stretch
        time.sleep(left - 0.0015 if left > 0.002 else 0)


def _decode(res, req):
    """(raw, error, t_r) as the deployment produced them.

    Behind the gateway the upstream time header replaces the measured
    time, and a 503 error envelope carries the transport failure kind.
    """
    raw, error, t_r = res.raw, res.error, res.t_r
    upstream = res.headers.get(UPSTREAM_MS)
    if upstream is not None:
        t_r = float(upstream)
        if res.status == 503 and raw is not None:
            try:
                kind = json.loads(raw)["error"]["data"]["kind"]
                return None, TransportError(kind), t_r
            except (ValueError, KeyError, TypeError):
                pass
    return raw, error, t_r


def run_http(
    spec: WorkloadSpec,
    target: str,
    config: ClassifierConfig | None = None,
    oracle: Callable[[], int] | None = None,
    log: VerdictLog | None = None,
    timeout_ms: float = 1000.0,
    max_workers: int = 256,
) -> RunStats:
    """Send ``spec`` to ``target`` at its fixed spacing and classify every reply.

    Without an ``oracle`` the head of reference is the highest head seen so
    far, seeded from one ``eth_blockNumber`` call to the target.
    """
    config = config or ClassifierConfig()
    log = log if log is not None else VerdictLog()
    seen = None
    if oracle is None:
        seen = HighestSeen()
        try:
            seen.offer(int(call(target, "eth_blockNumber", (), timeout_ms, request_id=0), 16))
        except (RuntimeError, ValueError):
            pass
        oracle = seen
    lock = threading.Lock()
    lags: list[float] = []

    def one(item, sent_unix: float) -> None:
        req = item.request
        res = post_json(target, req.to_json(), timeout_ms)
        raw, error, t_r = _decode(res, req)
        if seen is not None:
            seen.offer(_reported(raw, req))
        ex = RpcExchange(req, raw, error, t_r, sent_unix, None)
        verdict, kind = classify_detailed(ex, oracle(), config)
        rec = LogRecord(req.id, sent_unix, target, req.method, verdict, kind, res.t_r)
        with lock:
            log.append(rec)

    def head_at(_t: float) -> int:
        return oracle()

    with ThreadPoolExecutor(max_workers) as pool:
        base_perf = time.perf_counter() + 0.02
        base_unix = time.time() + (base_perf - time.perf_counter())
        futures = []
        for item in generate(spec, head_at, 0.0):
            due = base_perf + item.send_at
            _sleep_until(due)
            now = time.perf_counter()
            lags.append((now - due) * 1000.0)
            futures.append(pool.submit(one, item, base_unix + (now - base_perf)))
        for f in futures:
            f.result()
    return RunStats(summarize(log) if len(log) else _empty(), lags)


def _empty() -> Summary:
    return Summary(0, 0.0, 0.0, 0.0, {})

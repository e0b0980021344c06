"""HTTP front end for the N-version dispatcher.

``POST /`` takes one JSON-RPC call; ``GET /admin`` shows scores and ranking.
The body of the chosen sub-node response is passed through unchanged. When
every sub-node failed without a body the client gets HTTP 503 and a
JSON-RPC error whose ``data.kind`` names the transport failure.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Mapping

from ..methods import reported_head
from ..model import ChainState, ClassifierConfig, RpcExchange, RpcRequest, error_body
from ..proxy.core import Dispatcher, ProxyOutcome
from .client import SUB_NODE, UPSTREAM_MS, call, post_json

log = logging.getLogger(__name__)

ALL_FAILED = -32000


@dataclass(frozen=True)
class ProxyConfig:
    sub_nodes: tuple[tuple[str, str], ...]
    T: float = 100.0
    F: int = 2
    window: int | None = None
    host: str = "127.0.0.1"
    port: int = 8545
    oracle: Mapping = field(default_factory=dict)

    @property
    def classifier(self) -> ClassifierConfig:
        return ClassifierConfig(self.T, self.F)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProxyConfig":
        subs = tuple((s["id"], s["url"]) for s in d["sub_nodes"])
        if not subs:
            raise ValueError("config lists no sub-nodes")
        return cls(
            sub_nodes=subs,
            T=float(d.get("T", 100.0)),
            F=int(d.get("F", 2)),
            window=d.get("window"),
            host=d.get("host", "127.0.0.1"),
            port=int(d.get("port", 8545)),
            oracle=dict(d.get("oracle", {})),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ProxyConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "sub_nodes": [{"id": i, "url": u} for i, u in self.sub_nodes],
            "T": self.T,
            "F": self.F,
            "window": self.window,
            "host": self.host,
            "port": self.port,
            "oracle": dict(self.oracle),
        }


def make_oracle(spec: Mapping) -> Callable[[], int]:
    """Head source for freshness checks.

    ``{"url": ...}`` asks a reference endpoint for ``eth_blockNumber``;
    ``{"head_number", "genesis_at", "block_interval"}`` computes the head
    from the epoch clock. An empty spec yields the highest head seen in
    sub-node replies, which the dispatcher keeps up to date.
    """
    if "url" in spec:
        url = spec["url"]
        timeout = float(spec.get("timeout_ms", 1000.0))
        return lambda: int(call(url, "eth_blockNumber", (), timeout), 16)
    if "head_number" in spec:
        state = ChainState(int(spec["head_number"]), float(spec.get("block_interval", 12.0)),
                           float(spec.get("genesis_at", time.time())))
        return lambda: state.head_at(time.time())
    return HighestSeen()


class HighestSeen:
    """Fallback oracle: the largest head any sub-node has reported."""

    def __init__(self):
        self.head = 0
        self._lock = threading.Lock()

    def __call__(self) -> int:
        return self.head

    def offer(self, head: int | None) -> None:
        if head is not None:
            with self._lock:
                self.head = max(self.head, head)


def _reported(raw: bytes | None, req: RpcRequest) -> int | None:
    if raw is None:
        return None
    try:
        doc = json.loads(raw)
        return reported_head(req.method, req.params, doc.get("result"))
    except (ValueError, AttributeError, TypeError):
        return None


class ProxyServer:
    def __init__(self, config: ProxyConfig, oracle: Callable[[], int] | None = None):
        self.config = config
        self.dispatcher = Dispatcher(list(config.sub_nodes), config.classifier, window=config.window)
        self.oracle = oracle or make_oracle(config.oracle)
        self._srv: ThreadingHTTPServer | None = None

    @property
    def url(self) -> str:
        return f"http://{self.config.host}:{self.port}/"

    @property
    def port(self) -> int:
        return self._srv.server_address[1] if self._srv is not None else self.config.port

    def forward(self, req: RpcRequest) -> ProxyOutcome:
        body = req.to_json()
        T = self.config.T
        try:
            oracle_head = self.oracle()
        except Exception as exc:  # oracle hiccup: fall back to what sub-nodes report
            log.warning("oracle unavailable: %s", exc)
            oracle_head = 0
        seen = self.oracle if isinstance(self.oracle, HighestSeen) else None

        def send(sid: str, r: RpcRequest) -> RpcExchange:
            sent = time.time()
            res = post_json(self.dispatcher.endpoint(sid), body, T)
            if seen is not None:
                seen.offer(_reported(res.raw, r))
            return RpcExchange(r, res.raw, res.error, res.t_r, sent, sid)

        if seen is not None:
            plan = self.dispatcher.begin(req, oracle_head)
            while (target := plan.next_target()) is not None:
                ex = send(target, req)
                plan.oracle_head = max(plan.oracle_head, seen())
                plan.observe(target, ex)
            return plan.outcome()
        return self.dispatcher.handle(req, send, oracle_head)

    def start(self) -> "ProxyServer":
        if self._srv is not None:
            return self
        self._srv = _Server((self.config.host, self.config.port), _ProxyHandler)
        self._srv.front = self  # type: ignore[attr-defined]
        threading.Thread(target=self._srv.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True).start()
        return self

    def serve_forever(self) -> None:
        self._srv = _Server((self.config.host, self.config.port), _ProxyHandler)
        self._srv.front = self  # type: ignore[attr-defined]
        try:
            self._srv.serve_forever(poll_interval=0.1)
        finally:
            self._srv.server_close()

    def stop(self) -> None:
        if self._srv is not None:
            self._srv.shutdown()
            self._srv.server_close()
            self._srv = None

    def __enter__(self) -> "ProxyServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 256


class _ProxyHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "nvgate-proxy"

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def _reply(self, status: int, body: bytes, extra: Mapping[str, str] = ()) -> None:
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        for k, v in dict(extra).items():
            self.send_header(k, v)
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)
        self.close_connection = True

    def do_GET(self) -> None:  # noqa: N802
        front: ProxyServer = self.server.front  # type: ignore[attr-defined]
        if self.path.rstrip("/") == "/admin":
            self._reply(200, json.dumps(front.dispatcher.snapshot()).encode())
        else:
            self._reply(404, json.dumps({"error": "not found"}).encode())

    def do_POST(self) -> None:  # noqa: N802
        front: ProxyServer = self.server.front  # type: ignore[attr-defined]
        raw = self.rfile.read(int(self.headers.get("Content-Length") or 0))
        try:
            req = RpcRequest.from_json(raw)
        except json.JSONDecodeError as exc:
            self._reply(200, error_body(None, -32700, f"parse error: {exc}"))
            return
        except (ValueError, KeyError, TypeError) as exc:
            self._reply(200, error_body(None, -32600, f"invalid request: {exc}"))
            return
        outcome = front.forward(req)
        chosen = outcome.chosen
        headers = {UPSTREAM_MS: f"{chosen.verdict.t_r:.3f}", SUB_NODE: chosen.sub_node_id}
        if chosen.raw_response is not None:
            self._reply(200, chosen.raw_response, headers)
        else:
            kind = chosen.error.value if chosen.error else "Unknown"
            body = error_body(req.id, ALL_FAILED, "no sub-node produced a response",
                              {"kind": kind, "tried": [c.sub_node_id for c in outcome.attempts]})
            self._reply(503, body, headers)

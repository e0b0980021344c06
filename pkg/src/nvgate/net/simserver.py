"""HTTP front end for a :class:`SimNode`, with wire-level faults.

Healthy and body-level outcomes go out as ordinary HTTP responses. The
transport faults write raw bytes (or nothing) straight to the socket:

* a crashed node closes its listening socket, so connects are refused;
* a per-request refusal resets the accepted connection right away;
* stalls hold the connection open for the persona's stall time;
* resets close with SO_LINGER 0; EOF-class faults close without a reply;
* malformed preambles, bad chunk sizes and bad gzip trailers are sent as is.

Control requests are served on a second port that stays up during crashes.
"""

from __future__ import annotations

import json
import logging
import socket
import struct
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..model import ChainState, RpcRequest, error_body
from ..simnode.chain import GlobalChain
from ..simnode.faults import FaultMode, SimNodeFaultConfig
from ..simnode.node import Served, SimNode, gzip_with_bad_crc

log = logging.getLogger(__name__)

PARSE_ERROR = -32700
INVALID_REQUEST = -32600


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 256


def _reset(sock: socket.socket) -> None:
    try:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_LINGER, struct.pack("ii", 1, 0))
        sock.close()
    except OSError:
        pass


class _RpcHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "nvgate-simnode"

    def log_message(self, fmt, *args):  # quiet by default
        log.debug("%s " + fmt, self.address_string(), *args)

    def finish(self) -> None:
        try:
            super().finish()
        except OSError:
            pass

    def _send(self, status: int, body: bytes, extra: dict | None = None) -> None:
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        for k, v in (extra or {}).items():
            self.send_header(k, v)
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)
        self.close_connection = True

    def do_POST(self) -> None:  # noqa: N802
        front: SimNodeServer = self.server.front  # type: ignore[attr-defined]
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        try:
            req = RpcRequest.from_json(raw)
        except (ValueError, KeyError, TypeError) as exc:
            code = PARSE_ERROR if isinstance(exc, json.JSONDecodeError) else INVALID_REQUEST
            self._send(200, error_body(None, code, str(exc)))
            return
        received = time.perf_counter()
        served = front.serve(req)
        front.emit(self, req, served, received)


class SimNodeServer:
    """Serves one node on ``port`` (JSON-RPC) and ``control_port`` (control)."""

    def __init__(self, node: SimNode, host: str = "127.0.0.1", port: int = 0, control_port: int = 0,
                 monitor_interval: float = 0.005):
        self.node = node
        self.host = host
        self.port = port
        self.control_port = control_port
        self.monitor_interval = monitor_interval
        self._lock = threading.RLock()
        self._rpc: _Server | None = None
        self._rpc_thread: threading.Thread | None = None
        self._control: _Server | None = None
        self._stop = threading.Event()
        self._monitor: threading.Thread | None = None

    # node access, serialized -------------------------------------------------

    def now(self) -> float:
        return self.node.chain.clock.now()

    def serve(self, req: RpcRequest) -> Served:
        with self._lock:
            return self.node.serve(req, self.now())

    def head(self) -> dict:
        with self._lock:
            now = self.now()
            return {
                "node_id": self.node.node_id,
                "local_head": self.node.local_head(now),
                "global_head": self.node.chain.head_at(now),
                "crashed": self.node.is_crashed(now),
            }

    # lifecycle ------------------------------------------------------------------

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}/"

    @property
    def control_url(self) -> str:
        return f"http://{self.host}:{self.control_port}"

    def start(self) -> "SimNodeServer":
        if self._control is not None:
            return self  # already running
        self._stop.clear()
        self._open_rpc()
        self._control = _Server((self.host, self.control_port), _ControlHandler)
        self._control.front = self  # type: ignore[attr-defined]
        self.control_port = self._control.server_address[1]
        threading.Thread(target=self._control.serve_forever, kwargs={"poll_interval": 0.05},
                         daemon=True).start()
        self._monitor = threading.Thread(target=self._watch, daemon=True)
        self._monitor.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._monitor is not None:
            self._monitor.join()
        self._close_rpc()
        if self._control is not None:
            self._control.shutdown()
            self._control.server_close()
            self._control = None

    def __enter__(self) -> "SimNodeServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def _open_rpc(self) -> None:
        if self._rpc is not None:
            return
        srv = _Server((self.host, self.port), _RpcHandler)
        srv.front = self  # type: ignore[attr-defined]
        self.port = srv.server_address[1]
        self._rpc = srv
        self._rpc_thread = threading.Thread(target=srv.serve_forever, kwargs={"poll_interval": 0.01},
                                            daemon=True)
        self._rpc_thread.start()

    def _close_rpc(self) -> None:
        srv, self._rpc = self._rpc, None
        if srv is not None:
            srv.shutdown()
            srv.server_close()

    def _watch(self) -> None:
        # Listener follows node state: closed while crashed, so connects are refused.
        while not self._stop.wait(self.monitor_interval):
            with self._lock:
                crashed = self.node.is_crashed(self.now())
            try:
                if crashed and self._rpc is not None:
                    self._close_rpc()
                elif not crashed and self._rpc is None:
                    self._open_rpc()
            except OSError as exc:
                log.warning("listener toggle failed on port %d: %s", self.port, exc)

    # wire emission ----------------------------------------------------------------

    def _wait(self, handler: _RpcHandler, received: float, ms: float) -> None:
        remaining = received + ms / 1000.0 - time.perf_counter()
        if remaining > 0:
            self._stop.wait(remaining)

    def emit(self, h: _RpcHandler, req: RpcRequest, served: Served, received: float) -> None:
        mode = served.mode
        sock = h.connection
        if mode in (FaultMode.CRASH, FaultMode.ConnectionRefused):
            _reset(sock)
            h.close_connection = True
            return
        # a body timeout sends its headers on time and stalls mid-body
        body_stall = mode is FaultMode.TimeoutReadingBody
        self._wait(h, received, self.node.profile.latency_min_ms if body_stall else served.latency_ms)
        if served.error is None:
            h._send(200, served.body)
            return
        body = self.node.full_response(req, self.now())
        h.close_connection = True
        try:
            if mode is FaultMode.TimeoutAwaitingHeaders:
                return  # latency already covered the stall; close without a reply
            if mode is FaultMode.TimeoutReadingBody:
                # headers and part of the body, then the stall
                h.wfile.write(_head(200, {"Content-Length": str(len(body))}) + body[: len(body) // 2])
                h.wfile.flush()
                self._stop.wait(self.node.profile.stall_ms / 1000.0)
                return
            if mode is FaultMode.ConnectionResetByPeer:
                _reset(sock)
                return
            if mode in (FaultMode.ServerClosedIdleConnection, FaultMode.Eof):
                return
            if mode is FaultMode.UnexpectedEof:
                h.wfile.write(_head(200, {"Content-Length": str(len(body))}) + body[: len(body) // 2])
                return
            if mode is FaultMode.MalformedHttpResponse:
                h.wfile.write(b"HTTP/1.1 2OO 0K\r\nContent-Length: 0\r\n\r\n")
                return
            if mode is FaultMode.InvalidChunkLength:
                h.wfile.write(_head(200, {"Transfer-Encoding": "chunked"}) + b"zz\r\n" + body + b"\r\n0\r\n\r\n")
                return
            if mode is FaultMode.InvalidChecksum:
                gz = gzip_with_bad_crc(body)
                h.wfile.write(_head(200, {"Content-Encoding": "gzip", "Content-Length": str(len(gz))}) + gz)
                return
        except OSError:
            return
        _reset(sock)


def _head(status: int, headers: dict[str, str]) -> bytes:
    lines = [f"HTTP/1.1 {status} OK", "Content-Type: application/json", "Connection: close"]
    lines += [f"{k}: {v}" for k, v in headers.items()]
    return ("\r\n".join(lines) + "\r\n\r\n").encode("ascii")


class _ControlHandler(BaseHTTPRequestHandler):
    """GET /head; POST /faults, /crash, /restore, /chain."""

    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("control " + fmt, *args)

    def _reply(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(body)
        self.close_connection = True

    def do_GET(self) -> None:  # noqa: N802
        front: SimNodeServer = self.server.front  # type: ignore[attr-defined]
        if self.path.rstrip("/") in ("/head", ""):
            self._reply(200, front.head())
        elif self.path.rstrip("/") == "/faults":
            self._reply(200, front.node.base_faults.to_dict())
        else:
            self._reply(404, {"error": f"no such path {self.path}"})

    def do_POST(self) -> None:  # noqa: N802
        front: SimNodeServer = self.server.front  # type: ignore[attr-defined]
        length = int(self.headers.get("Content-Length") or 0)
        try:
            doc = json.loads(self.rfile.read(length) or b"{}")
            path = self.path.rstrip("/")
            with front._lock:
                node, now = front.node, front.now()
                if path == "/faults":
                    node.load_faults(SimNodeFaultConfig.from_dict(doc), now)
                elif path == "/crash":
                    node.crash(now, float(doc.get("duration", node.faults.crash_window)))
                elif path == "/restore":
                    delay = doc.get("catch_up_delay")
                    node.restore(now, None if delay is None else float(delay))
                elif path == "/chain":
                    chain: GlobalChain = node.chain
                    chain.reset(ChainState(int(doc["head_number"]), float(doc.get("block_interval", chain.block_interval)),
                                           float(doc.get("genesis_at", now))))
                    node.reset_state(now, doc.get("local_head"))
                else:
                    self._reply(404, {"error": f"no such path {self.path}"})
                    return
            self._reply(200, front.head())
        except (ValueError, KeyError, TypeError) as exc:
            self._reply(400, {"error": str(exc)})

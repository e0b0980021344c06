"""Blocking JSON-RPC over HTTP client that names what went wrong on the wire."""

from __future__ import annotations

import http.client
import json
import socket
import time
import zlib
from dataclasses import dataclass, field
from urllib.parse import urlsplit

from ..model import TransportError

UPSTREAM_MS = "X-Nvgate-Upstream-Ms"
SUB_NODE = "X-Nvgate-Sub-Node"


@dataclass
class HttpResult:
    raw: bytes | None
    error: TransportError | None
    t_r: float  # ms from send to last body byte, or to abandonment
    status: int | None = None
    headers: dict[str, str] = field(default_factory=dict)


def _caused_by(exc: BaseException, kind: type) -> bool:
    while exc is not None:
        if isinstance(exc, kind):
            return True
        exc = exc.__cause__ or exc.__context__
    return False


def split_target(url: str) -> tuple[str, int, str]:
    parts = urlsplit(url if "://" in url else "http://" + url)
    if parts.scheme != "http":
        raise ValueError(f"only http:// targets are supported, got {url!r}")
    return parts.hostname or "127.0.0.1", parts.port or 80, parts.path or "/"


def post_json(url: str, body: bytes, timeout_ms: float) -> HttpResult:
    """POST one JSON-RPC body. Never raises for network trouble."""
    host, port, path = split_target(url)
    deadline = time.perf_counter() + timeout_ms / 1000.0
    start = time.perf_counter()

    def elapsed() -> float:
        return (time.perf_counter() - start) * 1000.0

    def fail(kind: TransportError, at: float | None = None) -> HttpResult:
        return HttpResult(None, kind, elapsed() if at is None else at)

    conn = http.client.HTTPConnection(host, port, timeout=timeout_ms / 1000.0)
    try:
        try:
            conn.request("POST", path, body=body, headers={
                "Content-Type": "application/json",
                "Accept-Encoding": "gzip",
                "Connection": "close",
            })
            resp = conn.getresponse()
        except ConnectionRefusedError:
            return fail(TransportError.ConnectionRefused)
        except (socket.timeout, TimeoutError):
            return fail(TransportError.TimeoutAwaitingHeaders, timeout_ms)
        except http.client.RemoteDisconnected:
            return fail(TransportError.Eof)
        except (ConnectionResetError, BrokenPipeError, ConnectionAbortedError):
            return fail(TransportError.ConnectionResetByPeer)
        except http.client.HTTPException:
            return fail(TransportError.MalformedHttpResponse)
        except OSError:
            return fail(TransportError.ConnectionRefused)
        headers = {k: v for k, v in resp.getheaders()}
        if conn.sock is not None:
            conn.sock.settimeout(max(0.001, deadline - time.perf_counter()))
        try:
            data = resp.read()
        except (socket.timeout, TimeoutError):
            return fail(TransportError.TimeoutReadingBody, timeout_ms)
        except http.client.IncompleteRead as exc:
            if _caused_by(exc, ValueError):
                return fail(TransportError.InvalidChunkLength)
            return fail(TransportError.UnexpectedEof)
        except ValueError:
            return fail(TransportError.InvalidChunkLength)
        except (ConnectionResetError, ConnectionAbortedError):
            return fail(TransportError.ConnectionResetByPeer)
        except http.client.HTTPException:
            return fail(TransportError.MalformedHttpResponse)
        t_r = elapsed()
        if resp.getheader("Content-Encoding", "").lower() == "gzip":
            try:
                data = zlib.decompress(data, 31)
            except zlib.error:
                return fail(TransportError.InvalidChecksum, t_r)
        return HttpResult(data, None, t_r, resp.status, headers)
    finally:
        conn.close()


def call(url: str, method: str, params=(), timeout_ms: float = 1000.0, request_id=1):
    """Convenience: decoded ``result`` of one call, or raise ``RuntimeError``."""
    body = json.dumps({"jsonrpc": "2.0", "method": method, "params": list(params), "id": request_id}).encode()
    res = post_json(url, body, timeout_ms)
    if res.error is not None:
        raise RuntimeError(f"{method} to {url}: {res.error.message}")
    doc = json.loads(res.raw)
    if "error" in doc:
        raise RuntimeError(f"{method} to {url}: {doc['error']}")
    return doc["result"]


def get_json(url: str, timeout_ms: float = 2000.0) -> dict:
    host, port, path = split_target(url)
    conn = http.client.HTTPConnection(host, port, timeout=timeout_ms / 1000.0)
    try:
        conn.request("GET", path)
        resp = conn.getresponse()
        return json.loads(resp.read())
    finally:
        conn.close()


def post_control(url: str, payload: dict, timeout_ms: float = 2000.0) -> dict:
    host, port, path = split_target(url)
    conn = http.client.HTTPConnection(host, port, timeout=timeout_ms / 1000.0)
    try:
        conn.request("POST", path, body=json.dumps(payload).encode(),
                     headers={"Content-Type": "application/json"})
        resp = conn.getresponse()
        doc = json.loads(resp.read())
        if resp.status >= 400:
            raise RuntimeError(doc.get("error", f"HTTP {resp.status}"))
        return doc
    finally:
        conn.close()

"""Domain types shared by the gateway, the simulated nodes and the harness."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Any, Union

JSONRPC_VERSION = "2.0"
DEFAULT_BLOCK_INTERVAL = 12.0  # s; 150 blocks per 30 min


class TransportError(enum.Enum):
    """Failures observed by a JSON-RPC client, named after the client-side error."""

    ConnectionRefused = "ConnectionRefused"
    TimeoutAwaitingHeaders = "TimeoutAwaitingHeaders"
    TimeoutReadingBody = "TimeoutReadingBody"
    ConnectionResetByPeer = "ConnectionResetByPeer"
    ServerClosedIdleConnection = "ServerClosedIdleConnection"
    Eof = "Eof"
    UnexpectedEof = "UnexpectedEof"
    MalformedHttpResponse = "MalformedHttpResponse"
    InvalidChunkLength = "InvalidChunkLength"
    InvalidChecksum = "InvalidChecksum"
    InvalidCharacterInResponse = "InvalidCharacterInResponse"
    UnexpectedEndOfJson = "UnexpectedEndOfJson"

    @property
    def message(self) -> str:
        return _ERROR_MESSAGES[self]

    @classmethod
    def parse(cls, name: str) -> "TransportError":
        return cls[name]


_ERROR_MESSAGES = {
    TransportError.ConnectionRefused: "connect: connection refused",
    TransportError.TimeoutAwaitingHeaders: "Post: Client.Timeout while awaiting headers",
    TransportError.TimeoutReadingBody: "Client.Timeout while reading body",
    TransportError.ConnectionResetByPeer: "read: connection reset by peer",
    TransportError.ServerClosedIdleConnection: "http: server closed idle connection",
    TransportError.Eof: "Post: EOF",
    TransportError.UnexpectedEof: "unexpected EOF",
    TransportError.MalformedHttpResponse: "malformed HTTP response",
    TransportError.InvalidChunkLength: "invalid byte in chunk length",
    TransportError.InvalidChecksum: "gzip: invalid checksum",
    TransportError.InvalidCharacterInResponse: "invalid character in response",
    TransportError.UnexpectedEndOfJson: "unexpected end of JSON input",
}

# Kinds that leave the client holding a (defective) body rather than nothing.
BODY_DEFECTS = frozenset(
    {TransportError.InvalidCharacterInResponse, TransportError.UnexpectedEndOfJson}
)


@dataclass(frozen=True, slots=True)
class RpcRequest:
    method: str
    params: tuple = ()
    id: Union[int, str] = 1
    jsonrpc: str = JSONRPC_VERSION

    def __post_init__(self) -> None:
        if self.jsonrpc != JSONRPC_VERSION:
            raise ValueError(f"jsonrpc must be {JSONRPC_VERSION!r}, got {self.jsonrpc!r}")
        if not isinstance(self.method, str) or not self.method:
            raise ValueError("method must be a non-empty string")
        if isinstance(self.id, bool) or not isinstance(self.id, (int, str)):
            raise ValueError(f"id must be an integer or string, got {self.id!r}")
        if not isinstance(self.params, tuple):
            object.__setattr__(self, "params", tuple(self.params))

    def to_dict(self) -> dict:
        return {
            "jsonrpc": self.jsonrpc,
            "method": self.method,
            "params": list(self.params),
            "id": self.id,
        }

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict(), separators=(",", ":")).encode()

    @classmethod
    def from_dict(cls, obj: Any) -> "RpcRequest":
        if not isinstance(obj, dict):
            raise ValueError("request must be a JSON object")
        if "id" not in obj:
            raise ValueError("request has no id")
        params = obj.get("params", [])
        if not isinstance(params, list):
            raise ValueError("params must be a list")
        return cls(
            method=obj.get("method"),
            params=tuple(params),
            id=obj["id"],
            jsonrpc=obj.get("jsonrpc"),
        )

    @classmethod
    def from_json(cls, raw: Union[bytes, str]) -> "RpcRequest":
        return cls.from_dict(json.loads(raw))


class ParseDefect(enum.Enum):
    TRUNCATION = "truncation"
    INVALID_CHARACTER = "invalid_character"
    NOT_JSON = "not_json"
    INVALID_ENVELOPE = "invalid_envelope"


@dataclass(frozen=True, slots=True)
class ParseFailure:
    defect: ParseDefect
    detail: str
    offset: int = -1

    @property
    def error_kind(self) -> TransportError | None:
        """Client-visible error this defect surfaces as, if any."""
        if self.defect is ParseDefect.TRUNCATION:
            return TransportError.UnexpectedEndOfJson
        if self.defect in (ParseDefect.INVALID_CHARACTER, ParseDefect.NOT_JSON):
            return TransportError.InvalidCharacterInResponse
        return None


@dataclass(frozen=True, slots=True)
class RpcResponse:
    id: Union[int, str, None]
    result: Any = None
    error: dict | None = None

    @property
    def is_error(self) -> bool:
        return self.error is not None


def parse_rpc_response(raw: bytes) -> RpcResponse | ParseFailure:
    """Parse a full response body; never raises.

    Returns a :class:`ParseFailure` naming the first defect found.
    """
    if not raw or not raw.strip():
        return ParseFailure(ParseDefect.TRUNCATION, "empty body", 0)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        return ParseFailure(ParseDefect.NOT_JSON, f"not UTF-8: {exc.reason}", exc.start)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        if exc.pos >= len(text.rstrip()) or exc.msg.startswith("Unterminated string"):
            return ParseFailure(ParseDefect.TRUNCATION, exc.msg, exc.pos)
        return ParseFailure(ParseDefect.INVALID_CHARACTER, exc.msg, exc.pos)
    return _envelope(obj)


def _envelope(obj: Any) -> RpcResponse | ParseFailure:
    if not isinstance(obj, dict):
        return ParseFailure(ParseDefect.INVALID_ENVELOPE, "response is not an object")
    if obj.get("jsonrpc") != JSONRPC_VERSION:
        return ParseFailure(ParseDefect.INVALID_ENVELOPE, "missing or wrong jsonrpc version")
    if "id" not in obj:
        return ParseFailure(ParseDefect.INVALID_ENVELOPE, "missing id")
    rid = obj["id"]
    if isinstance(rid, bool) or not isinstance(rid, (int, str, type(None))):
        return ParseFailure(ParseDefect.INVALID_ENVELOPE, "bad id type")
    has_result = "result" in obj
    has_error = "error" in obj
    if has_result == has_error:
        return ParseFailure(ParseDefect.INVALID_ENVELOPE, "need exactly one of result/error")
    if has_error:
        err = obj["error"]
        if (
            not isinstance(err, dict)
            or isinstance(err.get("code"), bool)
            or not isinstance(err.get("code"), int)
            or not isinstance(err.get("message"), str)
        ):
            return ParseFailure(ParseDefect.INVALID_ENVELOPE, "malformed error object")
        return RpcResponse(rid, None, err)
    return RpcResponse(rid, obj["result"], None)


def result_body(request_id: Union[int, str, None], result_json: str) -> bytes:
    """Serialize a success envelope around an already-encoded result."""
    return b'{"jsonrpc":"2.0","id":%s,"result":%s}' % (
        json.dumps(request_id).encode(),
        result_json.encode(),
    )


def error_body(request_id: Union[int, str, None], code: int, message: str, data: Any = None) -> bytes:
    err: dict = {"code": code, "message": message}
    if data is not None:
        err["data"] = data
    return json.dumps(
        {"jsonrpc": JSONRPC_VERSION, "id": request_id, "error": err}, separators=(",", ":")
    ).encode()


@dataclass(frozen=True, slots=True)
class RpcExchange:
    """One request and what came back for it.

    Exactly one of ``raw_response`` and ``error`` is set. ``t_r`` is in
    milliseconds; for timeouts it is the elapsed time at abandonment.
    """

    request: RpcRequest
    raw_response: bytes | None
    error: TransportError | None
    t_r: float
    sent_at: float
    sub_node_id: str | None = None

    def __post_init__(self) -> None:
        if (self.raw_response is None) == (self.error is None):
            raise ValueError("exactly one of raw_response / error must be set")
        if not self.t_r >= 0:
            raise ValueError(f"t_r must be >= 0, got {self.t_r}")


@dataclass(frozen=True, slots=True)
class ChainState:
    """Global chain progression as a pure function of time.

    ``head_number`` is the head at ``genesis_at``; one block is added every
    ``block_interval`` seconds after that.
    """

    head_number: int = 0
    block_interval: float = DEFAULT_BLOCK_INTERVAL
    genesis_at: float = 0.0

    def __post_init__(self) -> None:
        if self.head_number < 0:
            raise ValueError("head_number must be non-negative")
        if not self.block_interval > 0:
            raise ValueError("block_interval must be > 0")

    def head_at(self, t: float) -> int:
        if t <= self.genesis_at:
            return self.head_number
        return self.head_number + int(math.floor((t - self.genesis_at) / self.block_interval))

    def block_time(self, number: int) -> float:
        """Time at which block ``number`` became the head."""
        return self.genesis_at + (number - self.head_number) * self.block_interval


@dataclass(frozen=True, slots=True)
class ClassifierConfig:
    T: float = 100.0  # ms
    F: int = 2  # blocks

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise ValueError("T must be > 0")
        if self.F < 0:
            raise ValueError("F must be >= 0")

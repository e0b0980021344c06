"""Deterministic pseudo chain state.

Every value is a pure function of the block number (and, for account
queries, the address/slot), so all simulated nodes agree on history and a
repeated query yields the same bytes. Hashes embed the block number in
their first 8 bytes so lookups by hash need no index.
"""

from __future__ import annotations

import hashlib
import json
from functools import lru_cache
from typing import Any

BASE_TIMESTAMP = 1_600_000_000
ZERO_ADDRESS = "0x" + "00" * 20

INVALID_PARAMS = -32602
METHOD_NOT_FOUND = -32601


class RpcFault(Exception):
    """Handler-level JSON-RPC error (a compliant error response)."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def _h(*parts: object, size: int = 32) -> bytes:
    h = hashlib.blake2b(digest_size=size)
    for p in parts:
        h.update(str(p).encode())
        h.update(b"\x00")
    return h.digest()


def _q(n: int) -> str:
    return hex(n)


@lru_cache(maxsize=8192)
def block_hash(number: int) -> str:
    return "0x" + number.to_bytes(8, "big").hex() + _h("block", number, size=24).hex()


def tx_count(number: int) -> int:
    return _h("ntx", number, size=1)[0] % 4


@lru_cache(maxsize=8192)
def tx_hash(number: int, index: int) -> str:
    return "0x" + number.to_bytes(8, "big").hex() + index.to_bytes(2, "big").hex() + _h("tx", number, index, size=22).hex()


def address(seed: object) -> str:
    return "0x" + _h("addr", seed, size=20).hex()


def _block_from_hash(h: Any) -> int | None:
    if not isinstance(h, str) or len(h) != 66 or not h.startswith("0x"):
        return None
    try:
        n = int(h[2:18], 16)
    except ValueError:
        return None
    return n if block_hash(n) == h.lower() else None


def _tx_from_hash(h: Any) -> tuple[int, int] | None:
    if not isinstance(h, str) or len(h) != 66 or not h.startswith("0x"):
        return None
    try:
        n, i = int(h[2:18], 16), int(h[18:22], 16)
    except ValueError:
        return None
    if i >= tx_count(n) or tx_hash(n, i) != h.lower():
        return None
    return n, i


def _tag(tag: Any, head: int) -> int | None:
    """Resolve a block tag/number; None for blocks past ``head``."""
    if tag in ("latest", "pending", "safe", "finalized"):
        return head
    if tag == "earliest":
        return 0
    if isinstance(tag, str) and tag.startswith("0x"):
        try:
            n = int(tag, 16)
        except ValueError:
            raise RpcFault(INVALID_PARAMS, f"invalid block number {tag!r}") from None
        return n if n <= head else None
    raise RpcFault(INVALID_PARAMS, f"invalid block tag {tag!r}")


def transaction(number: int, index: int) -> dict:
    seed = _h("txbody", number, index, size=16)
    return {
        "blockHash": block_hash(number),
        "blockNumber": _q(number),
        "from": address(("from", number, index)),
        "gas": _q(21000 + seed[0] * 100),
        "gasPrice": _q(10_000_000_000 + seed[1] * 1_000_000),
        "hash": tx_hash(number, index),
        "input": "0x",
        "nonce": _q(seed[2]),
        "to": address(("to", number, index)),
        "transactionIndex": _q(index),
        "value": _q(int.from_bytes(seed[3:9], "big")),
    }


def block(number: int, full: bool = False) -> dict:
    seed = _h("blockbody", number, size=8)
    n = tx_count(number)
    txs = [transaction(number, i) if full else tx_hash(number, i) for i in range(n)]
    return {
        "difficulty": "0x0",
        "gasLimit": _q(30_000_000),
        "gasUsed": _q(21000 * n + int.from_bytes(seed[:2], "big")),
        "hash": block_hash(number),
        "miner": address(("miner", number % 7)),
        "nonce": "0x0000000000000000",
        "number": _q(number),
        "parentHash": block_hash(number - 1) if number > 0 else "0x" + "00" * 32,
        "size": _q(600 + 110 * n),
        "timestamp": _q(BASE_TIMESTAMP + 12 * number),
        "totalDifficulty": _q(58_750_003_716_598_352_816_469),
        "transactions": txs,
        "uncles": [],
    }


def receipt(number: int, index: int) -> dict:
    return {
        "blockHash": block_hash(number),
        "blockNumber": _q(number),
        "cumulativeGasUsed": _q(21000 * (index + 1)),
        "gasUsed": _q(21000),
        "logs": [log(number, index)],
        "status": "0x1",
        "transactionHash": tx_hash(number, index),
        "transactionIndex": _q(index),
    }


def log(number: int, index: int) -> dict:
    return {
        "address": address(("log", number % 5)),
        "blockHash": block_hash(number),
        "blockNumber": _q(number),
        "data": "0x" + _h("logdata", number, index).hex(),
        "logIndex": _q(index),
        "topics": ["0x" + _h("topic", number % 3).hex()],
        "transactionHash": tx_hash(number, index),
        "transactionIndex": _q(index),
    }


def _param(params: tuple, i: int, default: Any = ...) -> Any:
    if i < len(params):
        return params[i]
    if default is ...:
        raise RpcFault(INVALID_PARAMS, f"missing parameter {i}")
    return default


def _account_value(kind: str, addr: Any, number: int, extra: Any = "") -> int:
    if not isinstance(addr, str):
        raise RpcFault(INVALID_PARAMS, "address must be a string")
    return int.from_bytes(_h(kind, addr.lower(), number // 16, extra, size=8), "big")


def _result(method: str, params: tuple, head: int) -> Any:
    if method == "eth_blockNumber":
        return _q(head)
    if method == "eth_gasPrice":
        return _q(15_000_000_000 + (_h("gas", head, size=2)[0] << 20))
    if method == "eth_estimateGas":
        return _q(21000 + _h("est", json.dumps(params, sort_keys=True), size=2)[0] * 250)
    if method == "eth_feeHistory":
        count = _param(params, 0)
        count = int(count, 16) if isinstance(count, str) else int(count)
        newest = _tag(_param(params, 1), head)
        count = max(1, min(count, 16))
        if newest is None:
            newest = head
        oldest = max(0, newest - count + 1)
        span = range(oldest, newest + 1)
        return {
            "oldestBlock": _q(oldest),
            "baseFeePerGas": [_q(10_000_000_000 + _h("base", b, size=2)[0] * 1000) for b in [*span, newest + 1]],
            "gasUsedRatio": [round(_h("ratio", b, size=1)[0] / 255, 6) for b in span],
        }
    if method in ("eth_getBalance", "eth_getTransactionCount", "eth_getCode"):
        number = _tag(_param(params, 1, "latest"), head)
        if number is None:
            raise RpcFault(INVALID_PARAMS, "header not found")
        if method == "eth_getBalance":
            return _q(_account_value("bal", _param(params, 0), number))
        if method == "eth_getTransactionCount":
            return _q(_account_value("nonce", _param(params, 0), number) % 5000)
        v = _account_value("code", _param(params, 0), 0)
        return "0x" if v % 3 else "0x" + _h("codebody", v, size=24).hex()
    if method == "eth_getStorageAt":
        number = _tag(_param(params, 2, "latest"), head)
        if number is None:
            raise RpcFault(INVALID_PARAMS, "header not found")
        v = _account_value("slot", _param(params, 0), number, _param(params, 1))
        return "0x" + v.to_bytes(32, "big").hex()
    if method == "eth_getBlockByNumber":
        number = _tag(_param(params, 0), head)
        return None if number is None else block(number, bool(_param(params, 1, False)))
    if method == "eth_getBlockByHash":
        number = _block_from_hash(_param(params, 0))
        return None if number is None or number > head else block(number, bool(_param(params, 1, False)))
    if method in ("eth_getBlockTransactionCountByNumber", "eth_getUncleCountByBlockNumber"):
        number = _tag(_param(params, 0), head)
    elif method in ("eth_getBlockTransactionCountByHash", "eth_getUncleCountByBlockHash"):
        number = _block_from_hash(_param(params, 0))
        number = None if number is None or number > head else number
    elif method in ("eth_getUncleByBlockNumberAndIndex", "eth_getUncleByBlockHashAndIndex"):
        _param(params, 1)
        return None
    elif method == "eth_getTransactionByBlockNumberAndIndex":
        number = _tag(_param(params, 0), head)
        return _tx_at(number, _param(params, 1))
    elif method == "eth_getTransactionByBlockHashAndIndex":
        number = _block_from_hash(_param(params, 0))
        return _tx_at(None if number is None or number > head else number, _param(params, 1))
    elif method in ("eth_getTransactionByHash", "eth_getTransactionReceipt"):
        loc = _tx_from_hash(_param(params, 0))
        if loc is None or loc[0] > head:
            return None
        return transaction(*loc) if method == "eth_getTransactionByHash" else receipt(*loc)
    elif method == "eth_getLogs":
        flt = _param(params, 0)
        if not isinstance(flt, dict):
            raise RpcFault(INVALID_PARAMS, "filter must be an object")
        lo = _tag(flt.get("fromBlock", "latest"), head)
        hi = _tag(flt.get("toBlock", "latest"), head)
        if lo is None:
            return []
        hi = head if hi is None else hi
        if hi - lo > 100:
            raise RpcFault(-32005, "query returned more than 10000 results")
        return [log(b, i) for b in range(lo, hi + 1) for i in range(tx_count(b))]
    else:
        raise RpcFault(METHOD_NOT_FOUND, f"the method {method} does not exist/is not available")

    if number is None:
        return None
    if method.startswith("eth_getUncle"):
        return "0x0"
    return _q(tx_count(number))


def _tx_at(number: int | None, index: Any) -> dict | None:
    if number is None:
        return None
    try:
        i = int(index, 16) if isinstance(index, str) else int(index)
    except (TypeError, ValueError):
        raise RpcFault(INVALID_PARAMS, f"invalid index {index!r}") from None
    return transaction(number, i) if 0 <= i < tx_count(number) else None


@lru_cache(maxsize=4096)
def _encoded(method: str, params_json: str, head: int) -> tuple[bool, str]:
    params = tuple(json.loads(params_json))
    try:
        return True, json.dumps(_result(method, params, head), separators=(",", ":"))
    except RpcFault as exc:
        return False, json.dumps({"code": exc.code, "message": exc.message}, separators=(",", ":"))


def encoded_result(method: str, params: tuple, head: int) -> tuple[bool, str]:
    """``(True, result_json)`` or ``(False, error_object_json)``."""
    return _encoded(method, json.dumps(list(params), separators=(",", ":")), head)


def response_body(request_id, method: str, params: tuple, head: int) -> bytes:
    ok, payload = encoded_result(method, params, head)
    key = b"result" if ok else b"error"
    return b'{"jsonrpc":"2.0","id":%s,"%s":%s}' % (json.dumps(request_id).encode(), key, payload.encode())

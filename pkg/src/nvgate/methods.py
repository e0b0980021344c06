"""The read-only JSON-RPC method pool and the result schema for each method.

Schemas are small predicates over the decoded ``result`` value. They check
shape (required keys, hex encodings, list types), not semantic content.
"""

from __future__ import annotations

import re
from typing import Any, Callable

_QUANTITY = re.compile(r"0x[0-9a-fA-F]+\Z")
_DATA = re.compile(r"0x(?:[0-9a-fA-F]{2})*\Z")
_HASH = re.compile(r"0x[0-9a-fA-F]{64}\Z")
_ADDRESS = re.compile(r"0x[0-9a-fA-F]{40}\Z")

HEAD_QUERY = ("eth_getBlockByNumber", ("latest", False))

METHOD_POOL: tuple[str, ...] = (
    "eth_blockNumber",
    "eth_estimateGas",
    "eth_feeHistory",
    "eth_gasPrice",
    "eth_getBalance",
    "eth_getBlockByHash",
    "eth_getBlockByNumber",
    "eth_getBlockTransactionCountByHash",
    "eth_getBlockTransactionCountByNumber",
    "eth_getCode",
    "eth_getLogs",
    "eth_getStorageAt",
    "eth_getTransactionByBlockHashAndIndex",
    "eth_getTransactionByBlockNumberAndIndex",
    "eth_getTransactionByHash",
    "eth_getTransactionCount",
    "eth_getTransactionReceipt",
    "eth_getUncleByBlockHashAndIndex",
    "eth_getUncleByBlockNumberAndIndex",
    "eth_getUncleCountByBlockHash",
    "eth_getUncleCountByBlockNumber",
)


def is_quantity(v: Any) -> bool:
    return isinstance(v, str) and _QUANTITY.match(v) is not None


def is_data(v: Any) -> bool:
    return isinstance(v, str) and _DATA.match(v) is not None


def is_hash(v: Any) -> bool:
    return isinstance(v, str) and _HASH.match(v) is not None


def _nullable(check: Callable[[Any], bool]) -> Callable[[Any], bool]:
    return lambda v: v is None or check(v)


BLOCK_REQUIRED = ("number", "timestamp", "gasLimit", "gasUsed", "transactions", "uncles")


def is_block(v: Any) -> bool:
    if not isinstance(v, dict):
        return False
    for key in BLOCK_REQUIRED:
        if key not in v:
            return False
    if not all(is_quantity(v[k]) for k in ("number", "timestamp", "gasLimit", "gasUsed")):
        return False
    if not isinstance(v["transactions"], list) or not isinstance(v["uncles"], list):
        return False
    for k in ("hash", "parentHash"):
        if k in v and v[k] is not None and not is_hash(v[k]):
            return False
    return True


def is_transaction(v: Any) -> bool:
    return (
        isinstance(v, dict)
        and is_hash(v.get("hash"))
        and isinstance(v.get("from"), str)
        and _ADDRESS.match(v["from"]) is not None
        and is_quantity(v.get("nonce"))
        and "blockNumber" in v
        and (v["blockNumber"] is None or is_quantity(v["blockNumber"]))
        and "transactionIndex" in v
    )


def is_log(v: Any) -> bool:
    return (
        isinstance(v, dict)
        and isinstance(v.get("address"), str)
        and isinstance(v.get("topics"), list)
        and all(is_hash(t) for t in v["topics"])
        and is_data(v.get("data"))
        and is_quantity(v.get("blockNumber"))
    )


def is_receipt(v: Any) -> bool:
    return (
        isinstance(v, dict)
        and is_hash(v.get("transactionHash"))
        and is_quantity(v.get("blockNumber"))
        and is_quantity(v.get("status"))
        and is_quantity(v.get("gasUsed"))
        and isinstance(v.get("logs"), list)
        and all(is_log(x) for x in v["logs"])
    )


def is_fee_history(v: Any) -> bool:
    return (
        isinstance(v, dict)
        and is_quantity(v.get("oldestBlock"))
        and isinstance(v.get("baseFeePerGas"), list)
        and all(is_quantity(x) for x in v["baseFeePerGas"])
        and isinstance(v.get("gasUsedRatio"), list)
        and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v["gasUsedRatio"])
    )


def _logs(v: Any) -> bool:
    return isinstance(v, list) and all(is_log(x) for x in v)


RESULT_SCHEMAS: dict[str, Callable[[Any], bool]] = {
    "eth_blockNumber": is_quantity,
    "eth_estimateGas": is_quantity,
    "eth_feeHistory": is_fee_history,
    "eth_gasPrice": is_quantity,
    "eth_getBalance": is_quantity,
    "eth_getBlockByHash": _nullable(is_block),
    "eth_getBlockByNumber": _nullable(is_block),
    "eth_getBlockTransactionCountByHash": _nullable(is_quantity),
    "eth_getBlockTransactionCountByNumber": _nullable(is_quantity),
    "eth_getCode": is_data,
    "eth_getLogs": _logs,
    "eth_getStorageAt": is_data,
    "eth_getTransactionByBlockHashAndIndex": _nullable(is_transaction),
    "eth_getTransactionByBlockNumberAndIndex": _nullable(is_transaction),
    "eth_getTransactionByHash": _nullable(is_transaction),
    "eth_getTransactionCount": is_quantity,
    "eth_getTransactionReceipt": _nullable(is_receipt),
    "eth_getUncleByBlockHashAndIndex": _nullable(is_block),
    "eth_getUncleByBlockNumberAndIndex": _nullable(is_block),
    "eth_getUncleCountByBlockHash": _nullable(is_quantity),
    "eth_getUncleCountByBlockNumber": _nullable(is_quantity),
}

assert set(RESULT_SCHEMAS) == set(METHOD_POOL)


def result_matches(method: str, result: Any) -> bool | None:
    """Schema verdict for ``result``; None when the method has no schema."""
    check = RESULT_SCHEMAS.get(method)
    if check is None:
        return None
    return check(result)


def reported_head(method: str, params: tuple, result: Any) -> int | None:
    """Block height a response claims as its latest head, if it carries one."""
    if method == "eth_blockNumber":
        return int(result, 16) if is_quantity(result) else None
    if method == "eth_getBlockByNumber" and params and params[0] == "latest":
        if isinstance(result, dict) and is_quantity(result.get("number")):
            return int(result["number"], 16)
    return None

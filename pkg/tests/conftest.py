import json

import pytest

from nvgate.model import ClassifierConfig, RpcExchange, RpcRequest

# Request/response pair in the shape of the reference block query; the
# transactions placeholder is an empty list and the elided fields are dropped.
BLOCK_REQUEST = {
    "jsonrpc": "2.0",
    "method": "eth_getBlockByNumber",
    "id": 1,
    "params": ["0xa55e27", False],
}
BLOCK_RESPONSE = {
    "jsonrpc": "2.0",
    "id": 1,
    "result": {
        "difficulty": "0xa9ed0e03a6530",
        "gasLimit": "0xbea427",
        "gasUsed": "0xbe64e3",
        "nonce": "0xde84c6458a7c0aa0",
        "number": "0xa55e27",
        "size": "0x6f75",
        "timestamp": "0x5f5ad163",
        "totalDifficulty": "0x3ab7010902da66c075f",
        "transactions": [],
        "uncles": [],
    },
}
LISTING_HEAD = 0xA55E27


@pytest.fixture
def block_body() -> bytes:
    return json.dumps(BLOCK_RESPONSE, indent=2).encode()


@pytest.fixture
def block_request() -> RpcRequest:
    return RpcRequest.from_dict(BLOCK_REQUEST)


@pytest.fixture
def head_request() -> RpcRequest:
    return RpcRequest("eth_getBlockByNumber", ("latest", False), 1)


@pytest.fixture
def cfg() -> ClassifierConfig:
    return ClassifierConfig(T=100.0, F=2)


def exchange(req, raw=None, error=None, t_r=10.0, sub=None):
    return RpcExchange(req, raw, error, t_r, 0.0, sub)


def head_body(head: int, request_id=1) -> bytes:
    doc = dict(BLOCK_RESPONSE, id=request_id)
    doc["result"] = dict(BLOCK_RESPONSE["result"], number=hex(head))
    return json.dumps(doc).encode()

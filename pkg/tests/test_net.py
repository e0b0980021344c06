"""Real sockets on localhost: wire faults, gateway, control endpoint."""

import json
import time

import pytest

from nvgate.classifier import Status, check_compliance
from nvgate.harness import boot_chain
from nvgate.methods import HEAD_QUERY
from nvgate.model import ClassifierConfig, RpcRequest, TransportError
from nvgate.net.client import SUB_NODE, UPSTREAM_MS, call, get_json, post_control, post_json
from nvgate.net.proxyserver import ProxyConfig, ProxyServer
from nvgate.net.runner import run_http
from nvgate.net.simserver import SimNodeServer
from nvgate.simnode.faults import FaultMode, SimNodeFaultConfig
from nvgate.simnode.node import SimNode, SimNodeProfile
from nvgate.workload import VerdictLog, WorkloadSpec

HEAD = 1_000_000
FAST = SimNodeProfile("fast", latency_min_ms=1.0, latency_max_ms=2.0, stall_ms=400.0)


def start(faults=None, label="fast"):
    node = SimNode(label, boot_chain(HEAD, 12.0), FAST, faults)
    return SimNodeServer(node).start()


def body(rid=1):
    return RpcRequest(*HEAD_QUERY, rid).to_json()


@pytest.fixture
def healthy():
    srv = start()
    yield srv
    srv.stop()


def test_healthy_exchange(healthy):
    res = post_json(healthy.url, body(), 500)
    assert res.error is None and res.status == 200
    assert check_compliance(res.raw, HEAD_QUERY[0])
    assert call(healthy.url, "eth_blockNumber") == hex(HEAD)


WIRE = {
    FaultMode.TimeoutAwaitingHeaders: TransportError.TimeoutAwaitingHeaders,
    FaultMode.TimeoutReadingBody: TransportError.TimeoutReadingBody,
    FaultMode.ConnectionResetByPeer: TransportError.ConnectionResetByPeer,
    FaultMode.ConnectionRefused: TransportError.ConnectionResetByPeer,  # RST after accept
    FaultMode.ServerClosedIdleConnection: TransportError.Eof,
    FaultMode.Eof: TransportError.Eof,
    FaultMode.UnexpectedEof: TransportError.UnexpectedEof,
    FaultMode.MalformedHttpResponse: TransportError.MalformedHttpResponse,
    FaultMode.InvalidChunkLength: TransportError.InvalidChunkLength,
    FaultMode.InvalidChecksum: TransportError.InvalidChecksum,
}


@pytest.mark.parametrize("mode", list(WIRE), ids=lambda m: m.value)
def test_wire_faults(mode):
    with start(SimNodeFaultConfig({mode: 1.0})) as srv:
        res = post_json(srv.url, body(), 100)
    assert res.raw is None and res.error is WIRE[mode]


@pytest.mark.parametrize("mode", [FaultMode.InvalidCharacterInResponse, FaultMode.UnexpectedEndOfJson])
def test_body_faults_arrive_non_compliant(mode):
    with start(SimNodeFaultConfig({mode: 1.0})) as srv:
        res = post_json(srv.url, body(), 500)
    assert res.error is None and res.status == 200
    assert not check_compliance(res.raw, HEAD_QUERY[0])


def test_crash_closes_listener_and_restore_reopens(healthy):
    assert post_control(healthy.control_url + "/crash", {"duration": 60})["crashed"]
    time.sleep(0.05)
    assert post_json(healthy.url, body(), 200).error is TransportError.ConnectionRefused
    post_control(healthy.control_url + "/restore", {"catch_up_delay": 0})
    time.sleep(0.05)
    assert post_json(healthy.url, body(), 500).error is None


def test_control_endpoint(healthy):
    ctl = healthy.control_url
    state = get_json(ctl + "/head")
    assert state["local_head"] == state["global_head"] == HEAD and not state["crashed"]
    cfg = SimNodeFaultConfig({FaultMode.Eof: 0.5}, seed=3)
    post_control(ctl + "/faults", cfg.to_dict())
    assert SimNodeFaultConfig.from_dict(get_json(ctl + "/faults")) == cfg
    state = post_control(ctl + "/chain", {"head_number": 42, "local_head": 40, "block_interval": 100})
    assert (state["global_head"], state["local_head"]) == (42, 42)  # fast persona re-syncs at once


def test_bad_request_is_jsonrpc_error(healthy):
    res = post_json(healthy.url, b"{nope", 500)
    assert json.loads(res.raw)["error"]["code"] == -32700


def gateway(servers, **kw):
    cfg = ProxyConfig(tuple((f"n{i}", s.url) for i, s in enumerate(servers)), port=0, **kw)
    return ProxyServer(cfg, oracle=lambda: HEAD)


def test_gateway_fails_over():
    with start(SimNodeFaultConfig({FaultMode.ConnectionResetByPeer: 1.0})) as bad, start() as good:
        with gateway([bad, good]) as gw:
            res = post_json(gw.url, body(), 1000)
            admin = get_json(gw.url + "admin")
    assert res.error is None and res.headers[SUB_NODE] == "n1"
    assert float(res.headers[UPSTREAM_MS]) < 100
    assert admin["ranking"][0] == "n1"


def test_gateway_all_failed_is_503():
    mk = SimNodeFaultConfig({FaultMode.Eof: 1.0})
    with start(mk) as a, start(mk) as b, gateway([a, b]) as gw:
        res = post_json(gw.url, body(7), 1000)
    assert res.status == 503
    err = json.loads(res.raw)["error"]
    assert err["code"] == -32000 and err["data"]["kind"] == "Eof"
    assert sorted(err["data"]["tried"]) == ["n0", "n1"]


def test_gateway_rejects_garbage(healthy):
    with gateway([healthy]) as gw:
        assert json.loads(post_json(gw.url, b"[1,", 500).raw)["error"]["code"] == -32700
        assert json.loads(post_json(gw.url, b'{"id": 1}', 500).raw)["error"]["code"] == -32600


def test_proxy_config_json_round_trip(tmp_path):
    doc = {"sub_nodes": [{"id": "a", "url": "http://127.0.0.1:1/"}], "T": 80, "F": 1, "port": 9000,
           "oracle": {"head_number": 5, "block_interval": 12}}
    path = tmp_path / "proxy.json"
    path.write_text(json.dumps(doc))
    cfg = ProxyConfig.load(path)
    assert (cfg.T, cfg.F, cfg.port, cfg.sub_nodes) == (80.0, 1, 9000, (("a", "http://127.0.0.1:1/"),))
    assert ProxyConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        ProxyConfig.from_dict({"sub_nodes": []})


def test_open_loop_run_through_gateway(tmp_path):
    with start() as a, start(SimNodeFaultConfig({FaultMode.Eof: 0.5})) as b, gateway([b, a]) as gw:
        with VerdictLog(tmp_path / "log.jsonl") as log:
            stats = run_http(WorkloadSpec("B", 200, 5.0), gw.url, ClassifierConfig(), log=log)
    records = VerdictLog.read(tmp_path / "log.jsonl")
    assert [r.request_id for r in records] == list(range(1, 201))
    assert stats.summary.available == 1.0
    assert all(r.verdict.status is Status.AVAILABLE for r in records)


def test_unreachable_target_still_logs_every_request():
    stats = run_http(WorkloadSpec("B", 20, 5.0), "http://127.0.0.1:9/", ClassifierConfig(), timeout_ms=200)
    assert stats.summary.total == 20 and stats.summary.unavailable == 1.0
    assert stats.summary.errors == {"ConnectionRefused": 20}

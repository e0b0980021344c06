"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
when output capture is on. ``python -m tests.test_acceptance`` is not
supported, use pytest.
"""

import itertools
import math
import os
import random
import subprocess
import sys
import time

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from nvgate.classifier import Status, classify, status_from_parts
from nvgate.deploy import NVersionDeployment, run_virtual
from nvgate.faultgen import (
    ErrorProfile,
    SyscallErrorTuple,
    aggregate,
    default_profiles,
    default_strategies,
)
from nvgate.model import ChainState, ClassifierConfig, RpcExchange, RpcRequest, TransportError
from nvgate.orchestrator import DeploymentPlan, cell_filename, deployment_name, run_experiment
from nvgate.proxy.core import select_best_degraded
from nvgate.simnode.chain import GlobalChain
from nvgate.simnode.faults import PER_REQUEST_MODES, FaultMode, SimNodeFaultConfig
from nvgate.simnode.node import SimNode, SimNodeProfile
from nvgate.workload import VerdictLog, WorkloadSpec

from .conftest import head_body
from .test_proxy import KINDS, brute_force, make_candidate

A, D, U = Status.AVAILABLE, Status.DEGRADED, Status.UNAVAILABLE
PERSONAS = ("geth", "besu", "erigon", "nethermind")


@pytest.fixture
def verdict_line(capsys):
    """Print the criterion line outside capture, then fail the test if needed."""

    def emit(n, ok, elapsed, limit, detail):
        in_time = elapsed < limit
        status = "PASS" if ok and in_time else "FAIL"
        with capsys.disabled():
            print(f"\nCRITERION {n}: {status} ({elapsed:.2f}s of {limit:g}s) {detail}")
        assert ok, detail
        assert in_time, f"took {elapsed:.2f}s, limit {limit}s"

    return emit


# 1 ------------------------------------------------------------------------------

def test_criterion_1_truth_table(verdict_line, head_request):
    t0 = time.perf_counter()
    cfg = ClassifierConfig(T=100.0, F=2)
    checked, bad = 0, []
    for t_r in (0.0, 50.0, 100.0, 100.001, 150.0):
        for c_r in (True, False):
            for f_r in (0, 2, 3, 10):
                want = U if t_r > 100.0 else (A if c_r and f_r <= 2 else D)
                got = status_from_parts(t_r, c_r, f_r, False, cfg)
                # same case through the full classifier on real bytes
                raw = head_body(1000 - f_r) if c_r else b'{"jsonrpc":"2.0","id":1,"result":'
                full = classify(RpcExchange(head_request, raw, None, t_r, 0.0), 1000, cfg).status
                checked += 1
                if got is not want or full is not want:
                    bad.append((t_r, c_r, f_r, got, full))
    example = classify(RpcExchange(head_request, head_body(1000), None, 150.0, 0.0), 1000, cfg).status
    denied = classify(RpcExchange(head_request, None, TransportError.ConnectionRefused, 1.0, 0.0), 1000, cfg)
    ok = not bad and example is U and denied.status is U
    verdict_line(1, ok, time.perf_counter() - t0, 1.0,
                 f"{checked} cases, mismatches={bad}, 150ms example -> {example.name}")


# 2 ------------------------------------------------------------------------------

HAND_AMPLIFIED = [0.609, 0.4305, 0.2835, 0.1995, 0.126, 0.08715, 0.05355, 0.0336, 0.02205, 0.0147,
                  0.009765, 0.006405, 0.00441, 0.002835, 0.00168, 0.0009555, 0.000546, 0.0003255,
                  0.0001785, 0.0000861]


def _brute_min(profiles):
    best = {}
    for p in profiles:
        for t in p.tuples:
            best[t.key] = min(best.get(t.key, 1.0), t.f)
    return best


def test_criterion_2_strategy_synthesis(verdict_line):
    t0 = time.perf_counter()
    strategies = default_strategies()
    problems = []
    if len(aggregate(default_profiles())) != 20 or len(strategies) != 20:
        problems.append("bundled set is not 20 tuples")
    for a, b in zip(strategies, strategies[1:]):
        if not a.keys() < b.keys():
            problems.append(f"FI{a.index} not strictly inside FI{b.index}")
    for s in strategies:
        fs = [t.f for t in s.tuples]
        if fs != sorted(fs, reverse=True):
            problems.append(f"FI{s.index} not descending")
    got = [t.f for t in strategies[-1].tuples]
    if any(not math.isclose(g, h, rel_tol=1e-12) for g, h in zip(got, HAND_AMPLIFIED)):
        problems.append("amplified values differ from hand-computed ones")
    rnd = random.Random(2024)
    calls = ["read", "write", "futex", "mmap", "clone", "openat"]
    errs = ["EAGAIN", "EINTR", "ENOMEM", "EIO"]
    keys = [(c, e) for c in calls for e in errs]
    for _ in range(1000):
        profiles = [ErrorProfile(f"c{i}", frozenset(SyscallErrorTuple(c, e, rnd.random())
                                                    for c, e in rnd.sample(keys, rnd.randint(0, 12))))
                    for i in range(rnd.randint(1, 5))]
        if {t.key: t.f for t in aggregate(profiles)} != _brute_min(profiles):
            problems.append("aggregation differs from key-wise minimum")
            break
    verdict_line(2, not problems, time.perf_counter() - t0, 5.0,
                 f"nesting/order/amplification/1000 aggregation trials; problems={problems}")


# 3 ------------------------------------------------------------------------------

def test_criterion_3_fault_frequency(verdict_line):
    t0 = time.perf_counter()
    n = 10_000
    modes = list(PER_REQUEST_MODES)
    probs = {m: 0.005 + 0.011 * i for i, m in enumerate(modes)}  # sums to 0.923 for 13 modes
    chain = GlobalChain(ChainState(1000, 12.0))
    node = SimNode("freq", chain, SimNodeProfile("freq"), SimNodeFaultConfig(probs, seed=31))
    counts = dict.fromkeys(modes, 0)
    for i in range(1, n + 1):
        m = node.serve(RpcRequest("eth_blockNumber", (), i), 0.0).mode
        if m is not None:
            counts[m] += 1
    worst = max(abs(counts[m] / n - p) for m, p in probs.items())
    # tick-drawn modes: onsets per tick with zero-length windows
    tick_cfg = SimNodeFaultConfig({FaultMode.CRASH: 0.07}, crash_window=0.0, sync_lag_probability=0.15,
                                  sync_lag_window=0.0, tick=0.005, seed=32)
    ticker = SimNode("ticks", GlobalChain(ChainState(1000, 12.0)), SimNodeProfile("ticks"), tick_cfg)
    ticker.local_head(n * 0.005)
    crash_err = abs(ticker.crash_count / n - 0.07)
    lag_err = abs(ticker.sync_lag_count / n - 0.15)
    worst = max(worst, crash_err, lag_err)
    verdict_line(3, worst <= 0.01, time.perf_counter() - t0, 30.0,
                 f"{len(modes)} request modes + CRASH + SYNC_LAG over 1e4 draws; max |rate-p|={worst:.4f}")


# 4, 8, 9 share one desk-scale run ----------------------------------------------------

@pytest.fixture(scope="module")
def desk_matrix(tmp_path_factory):
    plan = DeploymentPlan(combinations=(PERSONAS,))
    out = tmp_path_factory.mktemp("matrix")
    t0 = time.perf_counter()
    cells = {(deployment_name(m), k): run_experiment(plan, m, k, out) for m, k in plan.cells()}
    return plan, out, cells, time.perf_counter() - t0


def test_criterion_4_proxy_dominance(verdict_line, desk_matrix):
    plan, _, cells, elapsed = desk_matrix
    n4 = deployment_name(PERSONAS)
    failures, worst_margin = [], math.inf
    for k in plan.indices():
        if any(cells[(d, k)].failed for d in (*PERSONAS, n4)):
            failures.append(f"FI{k}: failed cell")
            continue
        singles = [cells[(p, k)].rates for p in PERSONAS]
        a4, _, u4 = cells[(n4, k)].rates
        if u4 > min(s[2] for s in singles):
            failures.append(f"FI{k}: unavailable {u4:.4f} > {min(s[2] for s in singles):.4f}")
        margin = a4 - max(s[0] for s in singles)
        worst_margin = min(worst_margin, margin)
        if margin < -0.01:
            failures.append(f"FI{k}: available {a4:.4f} below best single by {-margin:.4f}")

    def avg(d, i):
        return sum(cells[(d, k)].rates[i] for k in plan.indices()) / len(plan.indices())

    best = max(PERSONAS, key=lambda p: avg(p, 0))
    detail = (f"{len(cells)} cells; best single {best} avg A={avg(best, 0):.4f} U={avg(best, 2):.4f}; "
              f"N=4 avg A={avg(n4, 0):.4f} U={avg(n4, 2):.4f}; worst A margin {worst_margin:+.4f}; "
              f"violations={failures}")
    verdict_line(4, not failures, elapsed, 600.0, detail)


def test_criterion_5_independence(verdict_line):
    t0 = time.perf_counter()
    ps = (0.3, 0.2, 0.45)
    n = 100_000
    chain = GlobalChain(ChainState(1000, 12.0))
    nodes = [SimNode(f"ind{i}", chain, SimNodeProfile(f"ind{i}"),
                     SimNodeFaultConfig({FaultMode.ConnectionRefused: p}, seed=55)) for i, p in enumerate(ps)]
    cfg = ClassifierConfig()
    dep = NVersionDeployment(nodes, chain, cfg)
    summary, _ = run_virtual(WorkloadSpec("B", n, 5.0), dep, chain, cfg)
    expected = math.prod(ps)
    se = math.sqrt(expected * (1 - expected) / n)
    z = (summary.unavailable - expected) / se
    verdict_line(5, abs(z) <= 3, time.perf_counter() - t0, 120.0,
                 f"measured U={summary.unavailable:.5f} vs prod(p)={expected:.5f}, z={z:+.2f}")


_C6 = {"examples": 0, "requests": 0, "t0": None, "violations": []}


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(2, 4), st.integers(0, 2**32),
       st.lists(st.tuples(st.sampled_from(list(PER_REQUEST_MODES) + [FaultMode.CRASH]), st.floats(0, 0.6)),
                min_size=0, max_size=6))
def _short_circuit_property(n, seed, faults):
    chain = GlobalChain(ChainState(500, 1.0))
    nodes = []
    for i in range(n):
        probs = {}
        for mode, p in faults[i::n]:
            probs[mode] = probs.get(mode, 0.0) + p
        total = sum(p for m, p in probs.items() if m.per_request)
        if total > 1:
            probs = {m: (p / total if m.per_request else p) for m, p in probs.items()}
        probs = {m: min(p, 1.0) for m, p in probs.items()}
        nodes.append(SimNode(f"s{i}", chain, SimNodeProfile(f"s{i}", 1.0, 150.0),
                             SimNodeFaultConfig(probs, crash_window=0.5, seed=seed)))
    cfg = ClassifierConfig()
    dep = NVersionDeployment(nodes, chain, cfg)
    contacted = {}
    for i in range(1, 151):
        t = i * 0.005
        chain.clock.advance_to(t)
        dep.call(RpcRequest("eth_getBlockByNumber", ("latest", False), i), t)
        contacted[i] = [c.sub_node_id for c in dep.last_outcome.attempts]
        statuses = [c.verdict.status for c in dep.last_outcome.attempts]
        if A in statuses and statuses.index(A) != len(statuses) - 1:
            _C6["violations"].append(f"request {i}: contact after AVAILABLE")
    for node in nodes:
        if len(node.journal) != len(set(node.journal)):
            _C6["violations"].append(f"{node.node_id} received a request twice")
        for rid in node.journal:
            if node.node_id not in contacted[rid]:
                _C6["violations"].append(f"{node.node_id} got {rid} outside the attempt list")
    journaled = {rid: sorted(n.node_id for n in nodes if rid in n.journal) for rid in contacted}
    if any(sorted(v) != journaled[k] for k, v in contacted.items()):
        _C6["violations"].append("journals disagree with attempts")
    _C6["examples"] += 1
    _C6["requests"] += 150


def test_criterion_6_short_circuit_at_most_once(verdict_line):
    t0 = time.perf_counter()
    _short_circuit_property()
    v = _C6["violations"]
    verdict_line(6, not v, time.perf_counter() - t0, 60.0,
                 f"{_C6['examples']} random fault schedules, {_C6['requests']} requests; violations={v[:3]}")


def test_criterion_7_comparison_oracle(verdict_line, head_request):
    t0 = time.perf_counter()
    checked, bad = 0, 0
    for size in (1, 2, 3):
        for multiset in itertools.combinations_with_replacement(KINDS, size):
            for perm in set(itertools.permutations(multiset)):
                cands = [make_candidate(k, f"s{i}", head_request) for i, k in enumerate(perm)]
                for ranking in itertools.permutations([c.sub_node_id for c in cands]):
                    checked += 1
                    if select_best_degraded(cands, list(ranking)) is not brute_force(cands, list(ranking)):
                        bad += 1
    verdict_line(7, bad == 0, time.perf_counter() - t0, 1.0,
                 f"{checked} (multiset, ranking) cases over {KINDS}; disagreements={bad}")


RERUN = [("geth",), ("nethermind",), PERSONAS]


def test_criterion_8_determinism(verdict_line, desk_matrix, tmp_path):
    plan, out, cells, _ = desk_matrix
    t0 = time.perf_counter()
    mismatches, compared = [], 0
    for members in RERUN:
        for k in (1, 17, 20):
            name = deployment_name(members)
            again = run_experiment(plan, members, k, tmp_path)
            compared += 1
            same_file = (tmp_path / cell_filename(name, k)).read_bytes() == (out / cell_filename(name, k)).read_bytes()
            if again.digest != cells[(name, k)].digest or not same_file:
                mismatches.append(f"{name}/FI{k}")
    # the pure-Python kernels must reproduce the compiled run byte for byte
    code = ("import sys; from nvgate.orchestrator import DeploymentPlan, run_experiment;"
            "from nvgate import _kernels; assert _kernels.BACKEND == 'python';"
            "print(run_experiment(DeploymentPlan(), ('erigon',), 20).digest)")
    env = dict(os.environ, NVGATE_PURE_PYTHON="1")
    pure = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    compared += 1
    if pure.returncode != 0 or pure.stdout.strip() != cells[("erigon", 20)].digest:
        mismatches.append(f"erigon/FI20 pure-python ({pure.stderr.strip()[-200:]})")
    verdict_line(8, not mismatches, time.perf_counter() - t0, 600.0,
                 f"{compared} cells rerun incl. one on the pure-Python backend; mismatches={mismatches}")


def test_criterion_9_workload_conformance(verdict_line, desk_matrix):
    plan, out, cells, _ = desk_matrix
    t0 = time.perf_counter()
    n, step = plan.workload.total_requests, plan.workload.interval_ms / 1000.0
    problems = []
    spec = WorkloadSpec("B", n, plan.workload.interval_ms)
    if plan.workload != spec or n != 10_000:
        problems.append("plan does not use the default desk-scale kind B spec")
    for (name, k), cell in cells.items():
        s = cell.summary
        if s is None or s.total != n or abs(sum(s.rates) - 1.0) > 1e-12:
            problems.append(f"{name}/FI{k}: rates do not partition")
    for members in RERUN:
        recs = VerdictLog.read(out / cell_filename(deployment_name(members), 20))
        if [r.request_id for r in recs] != list(range(1, n + 1)):
            problems.append("ids not 1..N")
        if any(r.timestamp != (r.request_id - 1) * step for r in recs):
            problems.append("send times off the fixed spacing")
        if any(r.method != "eth_getBlockByNumber" for r in recs):
            problems.append("kind B issued a different method")
    verdict_line(9, not problems, time.perf_counter() - t0, 60.0,
                 f"{len(cells)} cells x {n} requests, spacing {plan.workload.interval_ms} ms; problems={problems[:3]}")

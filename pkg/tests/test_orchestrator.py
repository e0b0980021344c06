import json
import random

import pytest

from nvgate.faultgen import FaultBehaviorMap
from nvgate.model import ChainState, ClassifierConfig
from nvgate.orchestrator import (
    ZERO_FAULT,
    CellResult,
    DeploymentPlan,
    ExperimentReport,
    StateSnapshot,
    all_combinations,
    cell_filename,
    read_csv,
    render_report,
    render_tables,
    report_csv,
    run_experiment,
    run_matrix,
)
from nvgate.simnode.chain import GlobalChain
from nvgate.simnode.node import SimNode, SimNodeProfile
from nvgate.workload import Summary, VerdictLog, WorkloadSpec


def small_plan(**kw):
    base = dict(workload=WorkloadSpec("B", 2000, 5.0))
    base.update(kw)
    return DeploymentPlan(**base)


def test_eleven_combinations_and_fifteen_topologies():
    plan = DeploymentPlan()
    assert len(all_combinations(plan.personas)) == 6 + 4 + 1
    assert len(plan.deployments()) == 15


def test_four_singles_by_twenty_strategies():
    plan = DeploymentPlan(combinations=())
    assert len(plan.cells()) == 80


def test_empty_strategy_set_gives_empty_report(tmp_path):
    report = run_matrix(small_plan(strategy_indices=()), tmp_path)
    assert report.cells == {}
    with pytest.raises(ValueError):
        render_report(report)


def test_unknown_persona_or_strategy_rejected():
    with pytest.raises(ValueError):
        DeploymentPlan(personas=("geth", "reth"))
    with pytest.raises(ValueError):
        DeploymentPlan(strategy_indices=(99,))


@pytest.mark.parametrize("members", [("geth",), ("nethermind",), ("besu", "erigon"),
                                     ("geth", "besu", "erigon", "nethermind")])
def test_zero_fault_is_fully_available(members):
    cell = run_experiment(small_plan(), members, ZERO_FAULT)
    assert not cell.failed and cell.rates == (1.0, 0.0, 0.0)


def test_geth_first_strategy_at_least_99_percent():
    cell = run_experiment(DeploymentPlan(), ("geth",), 1)
    assert cell.rates[0] >= 0.99


def test_rerun_is_bit_identical(tmp_path):
    plan = small_plan()
    a = run_experiment(plan, ("erigon", "nethermind"), 18, tmp_path / "a")
    b = run_experiment(plan, ("erigon", "nethermind"), 18, tmp_path / "b")
    name = cell_filename("erigon+nethermind", 18)
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert a.digest == b.digest


def test_shuffled_cells_give_same_summaries():
    plan = small_plan(personas=("geth", "erigon", "nethermind"), strategy_indices=(3, 17, 20))
    cells = plan.cells()
    forward = {(m, k): run_experiment(plan, m, k).digest for m, k in cells}
    shuffled = cells[:]
    random.Random(2).shuffle(shuffled)
    assert {(m, k): run_experiment(plan, m, k).digest for m, k in shuffled} == forward


def test_boot_failure_marks_cell_failed():
    # a behavior map that cannot translate the strategy
    broken = small_plan(behavior=FaultBehaviorMap.from_dict({"entries": []}))
    cell = run_experiment(broken, ("geth",), 1)
    assert cell.failed and cell.error and cell.summary is None


def test_snapshot_restores_identical_heads():
    chain = GlobalChain(ChainState(500, 1.0, 0.0))
    nodes = [SimNode(p, chain, SimNodeProfile(p, catch_up_delay=30.0)) for p in ("a", "b")]
    nodes[0].crash(1.0, 5.0)
    snap = StateSnapshot.capture(chain, nodes, 4.0)
    assert snap.local_heads == {"a": 501, "b": 504}
    again = StateSnapshot.from_dict(json.loads(json.dumps(snap.to_dict())))
    fresh_chain = GlobalChain()
    fresh = [SimNode(p, fresh_chain, SimNodeProfile(p, catch_up_delay=30.0)) for p in ("a", "b")]
    again.restore(fresh_chain, fresh, 100.0)
    assert fresh_chain.head_at(100.0) == 504
    assert {n.node_id: n.local_head(100.0) for n in fresh} == snap.local_heads


def test_strategy_snapshots_follow_source_sync():
    plan = DeploymentPlan()
    assert plan.snapshot(1).chain.head_number == plan.source_head
    assert plan.snapshot(3).chain.head_number == plan.source_head + 2 * plan.sync_blocks


def summary(a, d, u, n=100):
    return Summary(n, a, d, u, {"AVAILABLE": round(a * n), "DEGRADED": round(d * n), "UNAVAILABLE": round(u * n)})


def fake_report():
    rnd = random.Random(8)
    rep = ExperimentReport(["geth", "besu", "geth+besu"], [1, 2, 3])
    for d in rep.deployments:
        for k in rep.strategies:
            a = rnd.randint(0, 100) / 100
            dg = rnd.randint(0, 100 - round(a * 100)) / 100
            rep.add(CellResult(d, k, summary(a, dg, 1 - a - dg)))
    return rep


def test_averages_are_means_of_cells():
    rep = fake_report()
    for d in rep.deployments:
        cells = [rep.cells[(d, k)].rates for k in rep.strategies]
        for i in range(3):
            assert rep.averages(d)[i] == pytest.approx(sum(c[i] for c in cells) / 3)


def test_csv_round_trip():
    rep = fake_report()
    parsed = read_csv(report_csv(rep))
    for (d, k), cell in rep.cells.items():
        assert parsed[(str(k), d)] == cell.rates
    assert parsed[("avg", "geth")] == rep.averages("geth")


def test_report_json_round_trip_any_order():
    rep = fake_report()
    shuffled = ExperimentReport(rep.deployments, rep.strategies)
    items = list(rep.cells.values())
    random.Random(1).shuffle(items)
    for c in items:
        shuffled.add(c)
    assert shuffled.to_dict() == rep.to_dict()
    assert ExperimentReport.from_dict(json.loads(json.dumps(rep.to_dict()))).to_dict() == rep.to_dict()


def test_single_cell_table_has_one_row():
    rep = ExperimentReport(["geth"], [1])
    rep.add(CellResult("geth", 1, summary(1.0, 0.0, 0.0)))
    lines = render_tables(rep).splitlines()
    rows = [x for x in lines if x.startswith("1 ")]
    assert len(rows) == 1 and "1.0000*" in rows[0]


def test_best_marker_per_row():
    rep = fake_report()
    text = render_tables(rep)
    for k in rep.strategies:
        row = next(x for x in text.splitlines() if x.startswith(f"{k} "))
        assert row.count("*") == 1
        best = rep.best(k)
        assert rep.rates(best, k)[0] == max(rep.rates(d, k)[0] for d in rep.deployments)


def test_render_writes_report_files(tmp_path):
    plan = small_plan(personas=("geth", "besu"), strategy_indices=(0, 5))
    rep = run_matrix(plan, tmp_path)
    render_report(rep, tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"matrix.csv", "matrix.json", "tables.txt"} <= names
    assert {cell_filename(d, k) for d in ("geth", "besu", "geth+besu") for k in (0, 5)} <= names
    doc = json.loads((tmp_path / "matrix.json").read_text())
    assert len(doc["cells"]) == 6
    assert doc["resources"]["geth"] == {"cpu": None, "ram": None, "disk": None}
    for cell in rep.cells.values():
        assert len(VerdictLog.read(cell.log_path)) == 2000
        assert sum(cell.rates) == pytest.approx(1.0, abs=1e-12)


def test_plan_file(tmp_path):
    (tmp_path / "plan.json").write_text(json.dumps({
        "personas": ["geth", "erigon"],
        "combinations": "all",
        "strategies": {"n": 5},
        "strategy_indices": [1, 5],
        "workload": {"kind": "B", "total_requests": 300, "interval_ms": 5},
        "seeds": {"faults": 4, "workload": 6},
        "classifier": {"T": 80, "F": 1},
        "chain": {"head_number": 1000, "block_interval": 2.0},
        "workers": 2,
    }))
    plan = DeploymentPlan.load(tmp_path / "plan.json")
    assert plan.deployments() == [("geth",), ("erigon",), ("geth", "erigon")]
    assert len(plan.strategies) == 5 and plan.indices() == [1, 5]
    assert (plan.seed, plan.workload.seed, plan.workload.total_requests) == (4, 6, 300)
    assert plan.classifier == ClassifierConfig(80, 1)
    assert DeploymentPlan.from_dict(plan.to_dict()).to_dict() == plan.to_dict()
    rep = run_matrix(plan)  # two worker processes
    assert len(rep.cells) == 6 and not rep.failed

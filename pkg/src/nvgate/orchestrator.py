"""Experiment matrix: deployments x fault strategies, each cell from a clean snapshot.

Every cell gets its own chain, clock and nodes. The starting state of a
cell depends only on the plan and the strategy index, so cells can run in
any order or in parallel and still produce identical verdict logs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import _kernels
from .deploy import NVersionDeployment, SingleDeployment, run_virtual
from .faultgen import (
    DEFAULT_AMPLIFICATION,
    FaultBehaviorMap,
    FaultInjectionStrategy,
    default_behavior_map,
    default_strategies,
    strategies_from_json,
    strategy_to_simconfig,
)
from .model import ChainState, ClassifierConfig
from .simnode.chain import GlobalChain
from .simnode.clock import VirtualClock
from .simnode.node import SimNode, SimNodeProfile, builtin_personas
from .workload import DESK_REQUESTS, FULL_SCALE_REQUESTS, Summary, VerdictLog, WorkloadKind, WorkloadSpec

log = logging.getLogger(__name__)

DESK_BLOCK_INTERVAL = 1.0
SOURCE_HEAD = 20_000_000
ZERO_FAULT = 0  # strategy index meaning "no injection"


@dataclass(frozen=True)
class StateSnapshot:
    """Chain state plus each node's local head at capture time."""

    chain: ChainState
    local_heads: Mapping[str, int]
    taken_at: float

    @classmethod
    def capture(cls, chain: GlobalChain, nodes: Iterable[SimNode], at: float) -> "StateSnapshot":
        return cls(chain.state, {n.node_id: n.local_head(at) for n in nodes}, at)

    def restore(self, chain: GlobalChain, nodes: Iterable[SimNode], at: float | None = None) -> None:
        """Rebase the chain so its head at ``at`` equals the captured head."""
        at = self.taken_at if at is None else at
        chain.reset(replace(self.chain, head_number=self.chain.head_at(self.taken_at), genesis_at=at))
        for n in nodes:
            n.reset_state(at, self.local_heads.get(n.node_id))

    def to_dict(self) -> dict:
        return {
            "chain": {
                "head_number": self.chain.head_number,
                "block_interval": self.chain.block_interval,
                "genesis_at": self.chain.genesis_at,
            },
            "local_heads": dict(self.local_heads),
            "taken_at": self.taken_at,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StateSnapshot":
        return cls(ChainState(**d["chain"]), dict(d["local_heads"]), d["taken_at"])


def all_combinations(personas: Sequence[str], sizes: Iterable[int] | None = None) -> list[tuple[str, ...]]:
    sizes = range(2, len(personas) + 1) if sizes is None else sizes
    return [c for k in sizes for c in itertools.combinations(personas, k)]


def deployment_name(members: Sequence[str]) -> str:
    return "+".join(members)


@dataclass(frozen=True)
class DeploymentPlan:
    """Everything needed to run the matrix.

    ``source_head`` is the head of the always-synced source node before the
    first strategy; between strategies it gains ``sync_blocks`` blocks, so
    strategy ``k`` starts from ``source_head + (k - 1) * sync_blocks``.
    """

    personas: tuple[str, ...] = ("geth", "besu", "erigon", "nethermind")
    combinations: tuple[tuple[str, ...], ...] | None = None  # None: all of size >= 2
    include_singles: bool = True
    strategies: tuple[FaultInjectionStrategy, ...] = ()
    strategy_indices: tuple[int, ...] | None = None
    workload: WorkloadSpec = field(default_factory=lambda: WorkloadSpec(WorkloadKind.B, DESK_REQUESTS))
    seed: int = 1
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    block_interval: float = DESK_BLOCK_INTERVAL
    source_head: int = SOURCE_HEAD
    sync_blocks: int = 150
    crash_window: float = 2.0
    sync_lag_window: float = 60.0
    tick: float = 0.005
    window: int | None = None
    workers: int = 1
    persona_defs: Mapping[str, SimNodeProfile] = field(default_factory=dict)
    behavior: FaultBehaviorMap | None = None

    def __post_init__(self) -> None:
        if not self.strategies:
            object.__setattr__(self, "strategies", tuple(default_strategies()))
        if not self.persona_defs:
            object.__setattr__(self, "persona_defs", builtin_personas())
        if self.behavior is None:
            object.__setattr__(self, "behavior", default_behavior_map())
        missing = [p for p in self.personas if p not in self.persona_defs]
        if missing:
            raise ValueError(f"unknown personas: {', '.join(missing)}")
        known = {s.index for s in self.strategies} | {ZERO_FAULT}
        bad = [i for i in self.strategy_indices or () if i not in known]
        if bad:
            raise ValueError(f"unknown strategy indices: {bad}")

    # shape ------------------------------------------------------------------

    def deployments(self) -> list[tuple[str, ...]]:
        singles = [(p,) for p in self.personas] if self.include_singles else []
        combos = all_combinations(self.personas) if self.combinations is None else list(self.combinations)
        return singles + [tuple(c) for c in combos]

    def indices(self) -> list[int]:
        if self.strategy_indices is not None:
            return list(self.strategy_indices)
        return [s.index for s in self.strategies]

    def cells(self) -> list[tuple[tuple[str, ...], int]]:
        return [(d, k) for k in self.indices() for d in self.deployments()]

    def strategy(self, index: int) -> FaultInjectionStrategy | None:
        if index == ZERO_FAULT:
            return None
        return next(s for s in self.strategies if s.index == index)

    def snapshot(self, index: int) -> StateSnapshot:
        head = self.source_head + max(0, index - 1) * self.sync_blocks
        chain = ChainState(head, self.block_interval, 0.0)
        return StateSnapshot(chain, {}, 0.0)

    def full_scale(self) -> "DeploymentPlan":
        return replace(self, workload=replace(self.workload, total_requests=FULL_SCALE_REQUESTS))

    # serialization ------------------------------------------------------------

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: str | Path | None = None) -> "DeploymentPlan":
        base = Path(base_dir) if base_dir is not None else Path(".")

        def path(p: str) -> Path:
            q = Path(p)
            return q if q.is_absolute() else base / q

        kw: dict = {}
        if "personas" in d:
            kw["personas"] = tuple(d["personas"])
        combos = d.get("combinations", "all")
        if combos != "all":
            kw["combinations"] = tuple(tuple(c) for c in combos)
        kw["include_singles"] = d.get("include_singles", True)
        strat = d.get("strategies", "default")
        if isinstance(strat, str) and strat != "default":
            kw["strategies"] = tuple(strategies_from_json(path(strat).read_text(encoding="utf-8")))
        elif isinstance(strat, Mapping):
            kw["strategies"] = tuple(default_strategies(strat.get("n", 20),
                                                        strat.get("amplification", DEFAULT_AMPLIFICATION)))
        idx = d.get("strategy_indices", "all")
        if idx != "all":
            kw["strategy_indices"] = tuple(int(i) for i in idx)
        if "workload" in d:
            kw["workload"] = WorkloadSpec.from_dict(d["workload"])
        seeds = d.get("seeds", {})
        if isinstance(seeds, Mapping):
            if "faults" in seeds:
                kw["seed"] = int(seeds["faults"])
            if "workload" in seeds and "workload" in kw:
                kw["workload"] = replace(kw["workload"], seed=int(seeds["workload"]))
            elif "workload" in seeds:
                kw["workload"] = replace(cls.workload_default(), seed=int(seeds["workload"]))
        else:
            kw["seed"] = int(seeds)
        if "classifier" in d:
            kw["classifier"] = ClassifierConfig(**d["classifier"])
        chain = d.get("chain", {})
        for src, dst in (("block_interval", "block_interval"), ("head_number", "source_head"),
                         ("sync_blocks", "sync_blocks")):
            if src in chain:
                kw[dst] = chain[src]
        faults = d.get("faults", {})
        for k in ("crash_window", "sync_lag_window", "tick"):
            if k in faults:
                kw[k] = float(faults[k])
        if faults.get("behavior_map"):
            kw["behavior"] = FaultBehaviorMap.load(path(faults["behavior_map"]))
        if faults.get("personas_file"):
            doc = json.loads(path(faults["personas_file"]).read_text(encoding="utf-8"))
            kw["persona_defs"] = {p["label"]: SimNodeProfile.from_dict(p) for p in doc["personas"]}
        if "window" in d:
            kw["window"] = d["window"]
        if "workers" in d:
            kw["workers"] = int(d["workers"])
        return cls(**kw)

    @staticmethod
    def workload_default() -> WorkloadSpec:
        return WorkloadSpec(WorkloadKind.B, DESK_REQUESTS)

    @classmethod
    def load(cls, path: str | Path) -> "DeploymentPlan":
        p = Path(path)
        return cls.from_dict(json.loads(p.read_text(encoding="utf-8")), p.parent)

    def to_dict(self) -> dict:
        return {
            "personas": list(self.personas),
            "combinations": "all" if self.combinations is None else [list(c) for c in self.combinations],
            "include_singles": self.include_singles,
            "strategy_indices": "all" if self.strategy_indices is None else list(self.strategy_indices),
            "workload": self.workload.to_dict(),
            "seeds": {"faults": self.seed, "workload": self.workload.seed},
            "classifier": {"T": self.classifier.T, "F": self.classifier.F},
            "chain": {"head_number": self.source_head, "block_interval": self.block_interval,
                      "sync_blocks": self.sync_blocks},
            "faults": {"crash_window": self.crash_window, "sync_lag_window": self.sync_lag_window,
                       "tick": self.tick},
            "window": self.window,
            "workers": self.workers,
        }


@dataclass
class CellResult:
    deployment: str
    strategy: int
    summary: Summary | None = None
    failed: bool = False
    error: str | None = None
    log_path: str | None = None
    digest: str | None = None

    @property
    def rates(self) -> tuple[float, float, float] | None:
        return None if self.summary is None else self.summary.rates

    def to_dict(self) -> dict:
        return {
            "deployment": self.deployment,
            "strategy": self.strategy,
            "summary": None if self.summary is None else self.summary.to_dict(),
            "failed": self.failed,
            "error": self.error,
            "log_path": self.log_path,
            "digest": self.digest,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CellResult":
        s = d.get("summary")
        return cls(d["deployment"], d["strategy"], Summary.from_dict(s) if s else None,
                   d.get("failed", False), d.get("error"), d.get("log_path"), d.get("digest"))


def log_digest(log: VerdictLog) -> str:
    h = hashlib.sha256()
    for r in log.records:
        h.update(json.dumps(r.to_dict(), separators=(",", ":")).encode())
        h.update(b"\n")
    return h.hexdigest()


def cell_filename(deployment: str, strategy: int) -> str:
    return f"FI{strategy:02d}__{deployment}.jsonl"


def build_nodes(plan: DeploymentPlan, members: Sequence[str], strategy: int, chain: GlobalChain) -> list[SimNode]:
    # The fault seed depends on the strategy, never on the deployment, so a
    # persona behaves identically alone and inside any combination.
    seed = _kernels.derive_key(plan.seed, "strategy", strategy)
    cfg = strategy_to_simconfig(plan.strategy(strategy), plan.behavior, seed,
                                crash_window=plan.crash_window, sync_lag_window=plan.sync_lag_window,
                                tick=plan.tick)
    return [SimNode(p, chain, plan.persona_defs[p], cfg) for p in members]


def run_experiment(plan: DeploymentPlan, members: Sequence[str], strategy: int,
                   out_dir: str | Path | None = None, wall_clock: bool = False) -> CellResult:
    """One cell: restore the snapshot, boot, inject, drive the workload, summarize."""
    name = deployment_name(members)
    result = CellResult(name, strategy)
    log_file = Path(out_dir) / cell_filename(name, strategy) if out_dir is not None else None
    try:
        if wall_clock:
            from .harness import run_wall_clock_cell

            log_ = run_wall_clock_cell(plan, members, strategy, log_file)
        else:
            chain = GlobalChain(clock=VirtualClock(0.0))
            nodes = build_nodes(plan, members, strategy, chain)
            plan.snapshot(strategy).restore(chain, nodes, 0.0)
            if len(nodes) == 1:
                dep = SingleDeployment(nodes[0], plan.classifier.T)
            else:
                dep = NVersionDeployment(nodes, chain, plan.classifier, window=plan.window, name=name)
            with VerdictLog(log_file) as log_:
                run_virtual(plan.workload, dep, chain, plan.classifier, log_, start=0.0)
        result.summary = _summary(log_, plan.workload.total_requests)
        result.digest = log_digest(log_)
        result.log_path = str(log_file) if log_file is not None else None
    except Exception as exc:  # a failed cell is reported, never dropped
        log.warning("cell %s FI%d failed: %s", name, strategy, exc)
        result.failed = True
        result.error = f"{type(exc).__name__}: {exc}"
        log.debug("%s", traceback.format_exc())
    return result


def _summary(log_: VerdictLog, expected: int) -> Summary:
    if len(log_.records) != expected:
        raise RuntimeError(f"log holds {len(log_.records)} records, expected {expected}")
    from .workload import summarize

    return summarize(log_)


def _run_cell(args) -> CellResult:
    plan, members, strategy, out_dir, wall = args
    return run_experiment(plan, members, strategy, out_dir, wall)


@dataclass
class ExperimentReport:
    deployments: list[str]
    strategies: list[int]
    cells: dict[tuple[str, int], CellResult] = field(default_factory=dict)
    plan: dict | None = None

    def add(self, cell: CellResult) -> None:
        self.cells[(cell.deployment, cell.strategy)] = cell

    @property
    def failed(self) -> list[CellResult]:
        return [c for c in self.cells.values() if c.failed]

    def rates(self, deployment: str, strategy: int) -> tuple[float, float, float] | None:
        c = self.cells.get((deployment, strategy))
        return None if c is None else c.rates

    def averages(self, deployment: str) -> tuple[float, float, float] | None:
        rows = [self.rates(deployment, k) for k in self.strategies]
        rows = [r for r in rows if r is not None]
        if not rows:
            return None
        return tuple(sum(r[i] for r in rows) / len(rows) for i in range(3))  # type: ignore[return-value]

    def best(self, strategy: int, deployments: Sequence[str] | None = None) -> str | None:
        """Deployment with the highest available rate for one row (first wins ties)."""
        best, top = None, -1.0
        for d in deployments or self.deployments:
            r = self.rates(d, strategy)
            if r is not None and r[0] > top:
                best, top = d, r[0]
        return best

    def to_dict(self) -> dict:
        return {
            "deployments": self.deployments,
            "strategies": self.strategies,
            "cells": [self.cells[k].to_dict() for k in sorted(self.cells, key=self._order)],
            "averages": {d: self.averages(d) for d in self.deployments},
            "best": {str(k): self.best(k) for k in self.strategies},
            # resource metering is out of scope; kept so the table shape is complete
            "resources": {d: {"cpu": None, "ram": None, "disk": None} for d in self.deployments},
            "plan": self.plan,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentReport":
        rep = cls(list(d["deployments"]), list(d["strategies"]), plan=d.get("plan"))
        for c in d["cells"]:
            rep.add(CellResult.from_dict(c))
        return rep

    def _order(self, key: tuple[str, int]):
        d, k = key
        return (self.strategies.index(k) if k in self.strategies else len(self.strategies),
                self.deployments.index(d) if d in self.deployments else len(self.deployments))


def run_matrix(plan: DeploymentPlan, out_dir: str | Path | None = None, wall_clock: bool = False,
               progress=None) -> ExperimentReport:
    deployments = plan.deployments()
    report = ExperimentReport([deployment_name(d) for d in deployments], plan.indices(), plan=plan.to_dict())
    jobs = [(plan, members, k, out_dir, wall_clock) for members, k in plan.cells()]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    if plan.workers > 1 and not wall_clock and len(jobs) > 1:
        with ProcessPoolExecutor(plan.workers) as pool:
            for cell in pool.map(_run_cell, jobs):
                report.add(cell)
                if progress:
                    progress(cell)
    else:
        for job in jobs:
            cell = _run_cell(job)
            report.add(cell)
            if progress:
                progress(cell)
    return report


# rendering -----------------------------------------------------------------

CSV_FIELDS = ("strategy", "deployment", "available", "degraded", "unavailable", "requests", "failed", "error")


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for key in sorted(report.cells, key=report._order):
        c = report.cells[key]
        r = c.rates or ("", "", "")
        w.writerow([c.strategy, c.deployment, *(repr(x) if x != "" else "" for x in r),
                    c.summary.total if c.summary else "", int(c.failed), c.error or ""])
    for d in report.deployments:
        avg = report.averages(d)
        if avg is not None:
            w.writerow(["avg", d, *(repr(x) for x in avg), "", 0, ""])
    return buf.getvalue()


def read_csv(text: str) -> dict[tuple[str, str], tuple[float, float, float]]:
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        if row["available"] == "":
            continue
        out[(row["strategy"], row["deployment"])] = (
            float(row["available"]), float(row["degraded"]), float(row["unavailable"]))
    return out


def render_tables(report: ExperimentReport, per_table: int = 4) -> str:
    """Fixed-width A/D/U tables, a few deployments per block; '*' marks the row's best."""
    blocks = []
    deps = report.deployments
    for i in range(0, len(deps), per_table):
        chunk = deps[i:i + per_table]
        width = 24
        head1 = "FI    " + "".join(f"{d[:width - 1]:<{width}}" for d in chunk)
        head2 = "      " + "".join(f"{'Avail':>7} {'Degr':>7} {'Unav':>7} " for _ in chunk)
        lines = [head1.rstrip(), head2.rstrip(), "-" * len(head2.rstrip())]
        for k in report.strategies:
            best = report.best(k)
            row = f"{k:<6}"
            for d in chunk:
                c = report.cells.get((d, k))
                if c is None or c.failed or c.rates is None:
                    row += f"{'FAILED' if c is not None else '-':>23} "
                    continue
                a, dg, u = c.rates
                mark = "*" if d == best else " "
                row += f"{a:7.4f}{mark}{dg:7.4f} {u:7.4f} "
            lines.append(row.rstrip())
        lines.append("-" * len(head2.rstrip()))
        row = f"{'avg':<6}"
        for d in chunk:
            avg = report.averages(d)
            row += f"{'-':>23} " if avg is None else f"{avg[0]:7.4f} {avg[1]:7.4f} {avg[2]:7.4f} "
        lines.append(row.rstrip())
        blocks.append("\n".join(lines))
    notes = ["* highest available rate in the FI row across all deployments"]
    if report.failed:
        notes.append(f"{len(report.failed)} cell(s) failed: " +
                     ", ".join(f"{c.deployment}/FI{c.strategy}" for c in report.failed))
    notes.append("resource columns (CPU/RAM/disk) are not metered and reported as null")
    return "\n\n".join(blocks) + "\n\n" + "\n".join(notes) + "\n"


def render_report(report: ExperimentReport, out_dir: str | Path | None = None) -> str:
    if not report.cells:
        raise ValueError("cannot render an empty report")
    text = render_tables(report)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "tables.txt").write_text(text, encoding="utf-8")
        (out / "matrix.csv").write_text(report_csv(report), encoding="utf-8")
        (out / "matrix.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return text

"""Command line: workloads, experiments, gateway, sim nodes, strategy synthesis."""

from __future__ import annotations

import csv
import json
import logging
import sys
import time
from pathlib import Path

import click

from .faultgen import (
    DEFAULT_AMPLIFICATION,
    FaultBehaviorMap,
    aggregate,
    default_behavior_map,
    default_profiles,
    default_strategies,
    load_profile,
    strategies_from_json,
    strategies_to_json,
    strategy_to_simconfig,
    synthesize,
)
from .model import ClassifierConfig


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging (repeatable).")
def main(verbose: int) -> None:
    """N-version JSON-RPC gateway and availability harness."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


# workload --------------------------------------------------------------------

@click.group("workload")
def workload_group() -> None:
    """Drive a JSON-RPC endpoint with Workload A or B."""


@workload_group.command("run")
@click.option("--kind", type=click.Choice(["A", "B"]), default="B", show_default=True)
@click.option("--target", required=True, help="Endpoint URL (sim node or gateway).")
@click.option("--count", type=int, default=10_000, show_default=True)
@click.option("--interval-ms", type=float, default=5.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Verdict log (JSON lines).")
@click.option("--oracle", default=None, help="Reference endpoint for the true head (default: highest head seen).")
@click.option("--timeout-ms", type=float, default=1000.0, show_default=True, help="Client abandon time.")
@click.option("-T", "T", type=float, default=100.0, show_default=True, help="Timeliness bound (ms).")
@click.option("-F", "F", type=int, default=2, show_default=True, help="Freshness bound (blocks).")
@click.option("--summary", "summary_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the summary (.json or .csv).")
def workload_run(kind, target, count, interval_ms, seed, out, oracle, timeout_ms, T, F, summary_path):
    """Send COUNT requests at a fixed spacing and record one verdict per request."""
    from .net.client import call
    from .net.runner import run_http
    from .workload import VerdictLog, WorkloadSpec

    spec = WorkloadSpec(kind, count, interval_ms, seed, target)
    head = None
    if oracle:
        def head() -> int:
            return int(call(oracle, "eth_blockNumber", (), timeout_ms), 16)
    with VerdictLog(out) as log:
        stats = run_http(spec, target, ClassifierConfig(T, F), head, log, timeout_ms)
    summary = stats.summary
    doc = {"target": target, "kind": kind, **summary.to_dict(), "send_lag_p99_ms": stats.lag_p99_ms}
    if summary_path:
        _write_summary(Path(summary_path), [("", target, summary)], doc)
    click.echo(json.dumps({k: doc[k] for k in ("total", "available", "degraded", "unavailable",
                                               "errors", "send_lag_p99_ms")}, indent=2))


def _write_summary(path: Path, rows, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["strategy", "deployment", "available", "degraded", "unavailable"])
            for strategy, deployment, s in rows:
                w.writerow([strategy, deployment, repr(s.available), repr(s.degraded), repr(s.unavailable)])
    else:
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


main.add_command(workload_group)


def workload_main() -> None:
    """Entry point for the stand-alone ``workload`` command."""
    logging.basicConfig(level=logging.WARNING)
    workload_group()


# experiment -------------------------------------------------------------------

@main.command("experiment")
@click.option("--plan", "plan_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Plan JSON (default: built-in desk-scale plan).")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Report directory.")
@click.option("--paper-scale", is_flag=True, help="360 000 requests per cell.")
@click.option("--wall-clock", is_flag=True, help="Real sockets and real time instead of virtual time.")
@click.option("--workers", type=int, default=None, help="Parallel cells (virtual time only).")
def experiment(plan_path, out, paper_scale, wall_clock, workers):
    """Run every (deployment, strategy) cell and write the report."""
    from dataclasses import replace

    from .orchestrator import DeploymentPlan, render_report, run_matrix

    plan = DeploymentPlan.load(plan_path) if plan_path else DeploymentPlan()
    if paper_scale:
        plan = plan.full_scale()
    if workers:
        plan = replace(plan, workers=workers)
    cells = plan.cells()
    click.echo(f"{len(cells)} cells: {len(plan.deployments())} deployments x {len(plan.indices())} strategies",
               err=True)
    started = time.perf_counter()
    done = 0

    def progress(cell):
        nonlocal done
        done += 1
        state = "FAILED " + (cell.error or "") if cell.failed else "a=%.4f d=%.4f u=%.4f" % cell.rates
        click.echo(f"[{done}/{len(cells)}] FI{cell.strategy} {cell.deployment}: {state}", err=True)

    report = run_matrix(plan, out, wall_clock=wall_clock, progress=progress)
    click.echo(render_report(report, out))
    click.echo(f"report written to {out} in {time.perf_counter() - started:.1f}s", err=True)
    if report.failed:
        sys.exit(1)


# gateway ----------------------------------------------------------------------

@main.group("proxy")
def proxy_group() -> None:
    """The N-version gateway."""


@proxy_group.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--port", type=int, default=None, help="Override the configured port.")
def proxy_serve(config_path, port):
    """Serve JSON-RPC on the configured port; GET /admin shows the ranking."""
    from dataclasses import replace

    from .net.proxyserver import ProxyConfig, ProxyServer

    cfg = ProxyConfig.load(config_path)
    if port is not None:
        cfg = replace(cfg, port=port)
    click.echo(f"gateway on http://{cfg.host}:{cfg.port}/ over {len(cfg.sub_nodes)} sub-node(s)", err=True)
    try:
        ProxyServer(cfg).serve_forever()
    except KeyboardInterrupt:
        pass


# sim node ---------------------------------------------------------------------

@main.group("simnode")
def simnode_group() -> None:
    """Simulated sub-nodes."""


@simnode_group.command("serve")
@click.option("--persona", default="geth", show_default=True)
@click.option("--personas-file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8546, show_default=True)
@click.option("--control-port", type=int, default=None, help="Default: port + 1000.")
@click.option("--head", type=int, default=20_000_000, show_default=True, help="Head at boot.")
@click.option("--block-interval", type=float, default=12.0, show_default=True)
@click.option("--genesis-at", type=float, default=None, help="Epoch time at which --head is current.")
@click.option("--faults", "faults_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Fault configuration JSON.")
@click.option("--strategy", type=int, default=None, help="Apply built-in strategy FI<k> instead.")
@click.option("--seed", type=int, default=1, show_default=True)
def simnode_serve(persona, personas_file, host, port, control_port, head, block_interval, genesis_at,
                  faults_path, strategy, seed):
    """Serve one simulated node plus its control endpoint."""
    from .harness import boot_chain
    from .net.simserver import SimNodeServer
    from .simnode.faults import SimNodeFaultConfig
    from .simnode.node import SimNode, SimNodeProfile, builtin_personas

    if personas_file:
        doc = json.loads(Path(personas_file).read_text(encoding="utf-8"))
        personas = {p["label"]: SimNodeProfile.from_dict(p) for p in doc["personas"]}
    else:
        personas = builtin_personas()
    if persona not in personas:
        raise click.BadParameter(f"unknown persona {persona!r}; known: {', '.join(personas)}")
    if faults_path:
        faults = SimNodeFaultConfig.from_dict(json.loads(Path(faults_path).read_text(encoding="utf-8")))
    elif strategy:
        faults = strategy_to_simconfig(default_strategies()[strategy - 1], default_behavior_map(), seed)
    else:
        faults = SimNodeFaultConfig.none()
    chain = boot_chain(head, block_interval, genesis_at)
    node = SimNode(persona, chain, personas[persona], faults)
    srv = SimNodeServer(node, host, port, control_port if control_port is not None else port + 1000)
    srv.start()
    click.echo(f"{persona} on {srv.url} (control {srv.control_url})", err=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        srv.stop()


# strategy synthesis -------------------------------------------------------------

@main.group("faultgen")
def faultgen_group() -> None:
    """Fault-injection strategy synthesis."""


@faultgen_group.command("synthesize")
@click.argument("profiles", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option("-n", "n", type=int, default=20, show_default=True)
@click.option("--amplification", type=float, default=DEFAULT_AMPLIFICATION, show_default=True)
@click.option("--additive", is_flag=True, help="f + a instead of f * (1 + a).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Default: stdout.")
def faultgen_synthesize(profiles, n, amplification, additive, out):
    """Aggregate PROFILES (default: bundled examples) into N nested strategies."""
    loaded = [load_profile(p) for p in profiles] if profiles else default_profiles()
    text = strategies_to_json(synthesize(aggregate(loaded), n, amplification, additive), amplification, additive)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


@faultgen_group.command("simconfig")
@click.option("--strategies", "strategies_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--index", type=int, required=True)
@click.option("--behavior", "behavior_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, default=1, show_default=True)
def faultgen_simconfig(strategies_path, index, behavior_path, seed):
    """Print the sim-node fault configuration for one strategy."""
    strategies = (strategies_from_json(Path(strategies_path).read_text(encoding="utf-8"))
                  if strategies_path else default_strategies())
    behavior = FaultBehaviorMap.load(behavior_path) if behavior_path else default_behavior_map()
    matches = [s for s in strategies if s.index == index]
    if not matches:
        raise click.BadParameter(f"no strategy with index {index}")
    click.echo(strategy_to_simconfig(matches[0], behavior, seed).to_json())


if __name__ == "__main__":
    main()

"""Compare the compiled and pure-Python draw kernels.

    python benchmarks/bench_kernels.py [--count N] [--repeat R]

Also times one desk-scale experiment cell on each backend (in a subprocess,
since the backend is chosen at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

from nvgate._kernels import _pykernels as py

try:
    from nvgate._kernels import _ckernels as cy
except ImportError:
    cy = None

CUMULATIVE = [0.01, 0.03, 0.05, 0.2]
CELL = ("import time; from nvgate.orchestrator import DeploymentPlan, run_experiment;"
        "t=time.perf_counter(); run_experiment(DeploymentPlan(), {members!r}, 20);"
        "print(time.perf_counter()-t)")


def bench(mod, count, repeat):
    out = {}
    for name, fn in (
        ("uniform_block", lambda: mod.uniform_block(7, 0, count)),
        ("draw_modes", lambda: mod.draw_modes(7, 0, count, CUMULATIVE)),
    ):
        best = min(timeit.repeat(fn, number=1, repeat=repeat))
        out[name] = best
    return out


def cell_time(members, pure):
    env = dict(os.environ)
    if pure:
        env["NVGATE_PURE_PYTHON"] = "1"
    res = subprocess.run([sys.executable, "-c", CELL.format(members=members)], env=env,
                         capture_output=True, text=True, check=True)
    return float(res.stdout)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--no-cells", action="store_true")
    args = ap.parse_args()

    py_t = bench(py, args.count, args.repeat)
    cy_t = bench(cy, args.count, args.repeat) if cy else None
    print(f"kernel draws, {args.count:,} slots, best of {args.repeat}")
    print(f"{'kernel':<16}{'python s':>10}{'cython s':>10}{'speedup':>9}")
    for k, v in py_t.items():
        c = cy_t[k] if cy_t else float("nan")
        print(f"{k:<16}{v:>10.3f}{c:>10.4f}{v / c:>8.0f}x")
    if args.no_cells:
        return
    print("\none experiment cell (FI20, 10k requests)")
    print(f"{'deployment':<36}{'python s':>10}{'cython s':>10}")
    for members in (("nethermind",), ("geth", "besu", "erigon", "nethermind")):
        print(f"{'+'.join(members):<36}{cell_time(members, True):>10.2f}{cell_time(members, False):>10.2f}")


if __name__ == "__main__":
    main()

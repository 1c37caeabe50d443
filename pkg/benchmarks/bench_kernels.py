"""Time the compiled kernels against the pure-Python fallback.

Each backend runs in its own interpreter because the switch is read at
import time. The numba column excludes compilation (one warm-up call).

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]
"""
import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from expanderlab._accel import backend
from expanderlab.algorithms import max_bipartite_matching, max_flow
from expanderlab.cabling import land_routers, plan_datacenter, resolve_topology
from expanderlab.flow_analysis import SpraypointPaths, max_concurrent_flow, random_matching
from expanderlab.graph_core import build_configuration_graph

repeat, quick = int(sys.argv[1]), sys.argv[2] == "1"
n = 300 if quick else 1000
rng = np.random.default_rng(0)
topo = build_configuration_graph(n, 32, seed=1)
prov = SpraypointPaths(topo, 4, 2, 1)
for t in range(n):
    prov.tables.get(t)
arcs = rng.integers(0, 2000, size=(40000, 2))
adj = [rng.choice(3000, size=4, replace=False).tolist() for _ in range(3000)]
rooms = 4 if quick else 10
plan = plan_datacenter(rooms, 50, seed=3)
for r in range(rooms):
    land_routers(plan, r, 100, 64, seed=r)
matrix = random_matching(n, seed=2)

work = {
    "max_flow": lambda: max_flow(2000, arcs, 0, 1999),
    "matching": lambda: max_bipartite_matching(3000, 3000, adj),
    "spray_paths": lambda: [prov.arcs(s, (s * 7 + 1) % n) for s in range(0, n, 5)],
    "resolve": lambda: resolve_topology(plan),
    "concurrent_flow": lambda: max_concurrent_flow(topo, prov, matrix, eps=0.05),
}
out = {"backend": backend()}
for name, fn in work.items():
    fn()  # warm-up (and compile)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps(out))
"""


def run(disable_numba, repeat, quick):
    env = dict(os.environ)
    env.pop("EXPANDERLAB_NO_NUMBA", None)
    if disable_numba:
        env["EXPANDERLAB_NO_NUMBA"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat), "1" if quick else "0"],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller instances")
    args = ap.parse_args()
    t0 = time.time()
    fast = run(False, args.repeat, args.quick)
    slow = run(True, args.repeat, args.quick)
    print(f"{'kernel':<16}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for name in fast:
        if name == "backend":
            continue
        print(f"{name:<16}{fast[name]:>11.4f}s{slow[name]:>11.4f}s{slow[name] / fast[name]:>9.1f}x")
    print(f"total wall time {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()

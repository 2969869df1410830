"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--episodes 30]

Times walk enumeration and the joint branch-and-bound on the same inputs
with each backend, then the whole oracle end to end (which also pays for
Python-side Pareto reduction and bookkeeping).
"""
import argparse
import time

import numpy as np

from ranmaze import _pykernels, kernels
from ranmaze.baselines import _csr, _increment_tables, exhaustive_optimum, request_candidates
from ranmaze.constraints import stage_mgbps
from ranmaze.netmodel import load_topology, sample_requests
from ranmaze.power import PowerCurve

try:
    from ranmaze import _ckernels
except ImportError:
    _ckernels = None

FIXTURE = __import__("pathlib").Path(__file__).resolve().parents[1] / "src/ranmaze/data/three_subnets.yaml"


def walk_args(net, req, eps):
    starts, dst, km, link = _csr(net)
    return (starts, dst, km, link, net.du_capable.astype(np.uint8), net.capacity,
            net.link_capacity, int(net.gc_node), int(req.entrance),
            np.array(req.cores, dtype=np.int64),
            np.array([stage_mgbps(req, s, eps) for s in range(4)], dtype=np.int64),
            (req.fronthaul_km, req.midhaul_km, req.e2e_km), req.fixed_destination,
            4 * net.n_nodes)


def search_args(net, reqs, eps, curve, sw):
    max_cap = int(net.capacity.max())
    tables = np.zeros((net.n_nodes, max_cap + 1))
    for n in range(net.n_nodes):
        tables[n, :int(net.capacity[n]) + 1] = curve.table(int(net.capacity[n]))
    inc = _increment_tables(net, curve)
    cores_l, bw_l, hops_l, lbs = [], [], [], []
    for req in reqs:
        recs, cores, bw, hops = request_candidates(net, req, eps, None)
        if not recs:
            return None
        lb = np.array([sum(inc[n][c] for n, c in enumerate(row) if c) for row in cores]) + sw * hops
        order = np.lexsort((np.arange(len(recs)), lb))
        cores_l.append(cores[order]); bw_l.append(bw[order]); hops_l.append(hops[order])
        lbs.append(float(lb.min()))
    suffix = np.zeros(len(reqs) + 1)
    for r in range(len(reqs) - 1, -1, -1):
        suffix[r] = suffix[r + 1] + lbs[r]
    return (cores_l, bw_l, hops_l, suffix, tables, net.capacity.astype(np.int64),
            net.link_capacity.astype(np.int64), float(sw))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--episodes", type=int, default=30)
    args = p.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the Python backend is available")
    dep = load_topology(FIXTURE)
    curve, sw, eps = PowerCurve(), dep.power["switch_kw"], dep.epsilon
    rng = np.random.default_rng(0)
    cases = []
    for i in range(args.episodes):
        net = dep.subnets[i % len(dep.subnets)]
        cases.append((net, sample_requests(net, rng, dep.request_ranges, 3)))
    walks = [walk_args(net, r, eps) for net, reqs in cases for r in reqs]
    searches = [a for a in (search_args(net, reqs, eps, curve, sw) for net, reqs in cases if reqs)
                if a is not None]

    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    results = {}
    for name, mod in backends:
        results[name] = (
            best_of(lambda: [mod.enumerate_walks(*a) for a in walks], args.repeat),
            best_of(lambda: [mod.joint_search(*a) for a in searches], args.repeat),
        )

    def oracle_all():
        for net, reqs in cases:
            exhaustive_optimum(net, reqs, eps, curve, sw)

    saved = kernels.enumerate_walks, kernels.joint_search
    for name, mod in backends:
        kernels.enumerate_walks, kernels.joint_search = mod.enumerate_walks, mod.joint_search
        results[name] += (best_of(oracle_all, args.repeat),)
    kernels.enumerate_walks, kernels.joint_search = saved

    print(f"{len(walks)} walk enumerations, {len(searches)} joint searches, "
          f"{len(cases)} oracle episodes; best of {args.repeat}")
    print(f"{'kernel':<18}" + "".join(f"{n:>12}" for n, _ in backends) + ("     speedup" if len(backends) > 1 else ""))
    for i, label in enumerate(("enumerate_walks", "joint_search", "oracle end-to-end")):
        row = [results[n][i] for n, _ in backends]
        line = f"{label:<18}" + "".join(f"{t * 1000:>10.1f}ms" for t in row)
        if len(row) > 1:
            line += f"{row[0] / row[1]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()

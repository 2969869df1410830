"""Reference placement strategies: random, greedy and exhaustive optimum.

Every strategy serves requests in arrival order against one ledger and
returns a :class:`StrategyResult`. Served records always pass
:func:`~ranmaze.constraints.feasible` against the ledger they were committed
on.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .constraints import (Placement, commit, feasible, shortest_path, stage_mgbps,
                          steps_needed)
from .netmodel import Request, ResourceLedger, SubNetwork
from .power import PowerCurve, episode_power

MAX_ORACLE_NODES = 6
MAX_ORACLE_REQUESTS = 3


class InstanceTooLarge(ValueError):
    pass


@dataclass
class StrategyResult:
    strategy: str
    placements: list = field(default_factory=list)   # served records
    failed: list = field(default_factory=list)       # (request id, cause)
    power_kw: float = 0.0
    n_requests: int = 0
    note: str = ""

    @property
    def t(self) -> float:
        return 1.0 if self.n_requests == 0 else len(self.placements) / self.n_requests

    @property
    def feasible_found(self) -> bool:
        return len(self.placements) == self.n_requests


def _finish(result: StrategyResult, net, curve, switch_kw):
    result.power_kw = episode_power(result.placements, net, curve, switch_kw)
    return result


def _walk_through(net: SubNetwork, hosts, entrance: int) -> Placement | None:
    """Route visiting ``hosts`` in order along minimum-km paths."""
    route = [entrance]
    place_at = []
    for h in hosts:
        path = shortest_path(net, route[-1], h)
        if path is None:
            return None
        route.extend(path[1:])
        place_at.append(len(route) - 1)
    return route, place_at


def random_place(net: SubNetwork, requests: list[Request], seed, epsilon: float = 0.2,
                 curve: PowerCurve | None = None, switch_kw: float = 30.0,
                 ledger: ResourceLedger | None = None) -> StrategyResult:
    curve = curve or PowerCurve()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    ledger = ledger.copy() if ledger is not None else ResourceLedger.full(net)
    du_nodes = np.flatnonzero(net.du_capable)
    res = StrategyResult("random", n_requests=len(requests))
    for req in requests:
        hosts = [int(du_nodes[rng.integers(len(du_nodes))])]
        hosts += [int(rng.integers(net.n_nodes)) for _ in range(3)]
        walk = _walk_through(net, hosts, req.entrance)
        if walk is None:
            res.failed.append((req.id, "unroutable"))
            continue
        rec = Placement(req, *walk)
        verdict = feasible(rec, ledger, net, epsilon)
        if verdict.ok:
            commit(ledger, rec, net, epsilon)
            res.placements.append(rec)
        else:
            res.failed.append((req.id, verdict.violated))
    return _finish(res, net, curve, switch_kw)


def greedy_place(net: SubNetwork, requests: list[Request], epsilon: float = 0.2,
                 curve: PowerCurve | None = None, switch_kw: float = 30.0,
                 ledger: ResourceLedger | None = None) -> StrategyResult:
    """Place each function on the node with the smallest power increase.

    The increase counts the node's power delta plus switching power for the
    hops from the current position. Paths are fewest-hop (then shortest km)
    over links that still carry the hop's traffic; candidates that would
    break the function's latency budget, the DU rule or the 5GC destination
    rule are skipped. Ties go to the lowest node index. A request fails as
    soon as some function has no candidate.
    """
    curve = curve or PowerCurve()
    ledger = ledger.copy() if ledger is not None else ResourceLedger.full(net)
    res = StrategyResult("greedy", n_requests=len(requests))
    for req in requests:
        start = ledger.copy()
        rec = Placement(req)
        km = 0.0
        cause = None
        for v in range(4):
            best = None
            pos = rec.route[-1]
            need = stage_mgbps(req, v, epsilon)

            def usable(ai, need=need):
                return ledger.bandwidth[net.arc_link[ai]] >= need

            for n in range(net.n_nodes):
                if v == 0 and not net.du_capable[n]:
                    continue
                if v == 3 and req.fixed_destination and n != net.gc_node:
                    continue
                if ledger.compute[n] < req.cores[v]:
                    continue
                path = shortest_path(net, pos, n, weight="hops", usable=usable)
                if path is None:
                    continue
                # a path may reuse a link; check the summed claim
                claims: dict[int, int] = {}
                for a, b in zip(path, path[1:]):
                    link = int(net.arc_link[net.arc_of[(a, b)]])
                    claims[link] = claims.get(link, 0) + need
                if any(c > ledger.bandwidth[l] for l, c in claims.items()):
                    continue
                dist = km + sum(net.arc_km[net.arc_of[(a, b)]] for a, b in zip(path, path[1:]))
                budget = (req.fronthaul_km, None, req.midhaul_km, req.e2e_km)[v]
                if budget is not None and dist > budget:
                    continue
                used = int(net.capacity[n] - ledger.compute[n])
                delta = (curve((used + req.cores[v]) / net.capacity[n])
                         - curve(used / net.capacity[n])
                         + switch_kw * (len(path) - 1))
                if best is None or delta < best[0]:
                    best = (delta, n, path, dist, claims)
            if best is None:
                cause = f"no-host-{v}"
                break
            _, n, path, dist, claims = best
            for link, c in claims.items():
                ledger.reserve_link(link, c)
            ledger.reserve_node(n, req.cores[v])
            rec.route.extend(path[1:])
            rec.place_at.append(len(rec.route) - 1)
            km = dist
        if cause is None:
            verdict = feasible(rec, start, net, epsilon)
            if not verdict.ok:  # defensive; greedy checks every constraint itself
                cause = verdict.violated
        if cause is None:
            res.placements.append(rec)
        else:
            ledger.restore(start)
            res.failed.append((req.id, cause))
    return _finish(res, net, curve, switch_kw)


# --- exhaustive optimum ----------------------------------------------------

def _csr(net: SubNetwork):
    starts = [0]
    dst, km, link = [], [], []
    for n in range(net.n_nodes):
        for ai in net.out_arcs[n]:
            dst.append(net.arcs[ai][1])
            km.append(float(net.arc_km[ai]))
            link.append(int(net.arc_link[ai]))
        starts.append(len(dst))
    return (np.array(starts, dtype=np.int64), np.array(dst, dtype=np.int64),
            np.array(km, dtype=float), np.array(link, dtype=np.int64))


def request_candidates(net: SubNetwork, req: Request, epsilon: float,
                       step_cap: int | None = None):
    """All individually feasible walks of one request, reduced to non-dominated footprints.

    Two walks with the same per-node compute vector compete only on hop count
    and per-link bandwidth; a walk that is no better on every one of them is
    dropped, which cannot change the optimum.
    Returns (records, cores (K, N), bandwidth (K, L), hops (K,)).
    """
    step_cap = 4 * net.n_nodes if step_cap is None else step_cap
    starts, dst, km, link = _csr(net)
    walks = kernels.enumerate_walks(
        starts, dst, km, link, net.du_capable.astype(np.uint8), net.capacity,
        net.link_capacity, int(net.gc_node), int(req.entrance),
        np.array(req.cores, dtype=np.int64),
        np.array([stage_mgbps(req, s, epsilon) for s in range(4)], dtype=np.int64),
        (float(req.fronthaul_km), float(req.midhaul_km), float(req.e2e_km)),
        bool(req.fixed_destination), int(step_cap))
    n_links = len(net.links)
    groups: dict[tuple, list] = {}
    for route, place_at in walks:
        rec = Placement(req, list(route), list(place_at))
        cores = np.zeros(net.n_nodes, dtype=np.int64)
        for v, i in enumerate(place_at):
            cores[route[i]] += req.cores[v]
        bw = np.zeros(n_links, dtype=np.int64)
        for l, mg in rec.traversals(net, epsilon):
            bw[l] += mg
        groups.setdefault(tuple(cores), []).append((rec.hops, bw, rec))
    recs, cores_out, bw_out, hops_out = [], [], [], []
    for key, items in groups.items():
        kept = []
        for hops, bw, rec in items:
            if any(h2 <= hops and np.all(b2 <= bw) for h2, b2, _ in kept):
                continue
            kept = [k for k in kept if not (hops <= k[0] and np.all(bw <= k[1]))]
            kept.append((hops, bw, rec))
        for hops, bw, rec in kept:
            recs.append(rec)
            cores_out.append(key)
            bw_out.append(bw)
            hops_out.append(hops)
    return (recs, np.array(cores_out, dtype=np.int64).reshape(-1, net.n_nodes),
            np.array(bw_out, dtype=np.int64).reshape(-1, n_links),
            np.array(hops_out, dtype=np.int64))


def _increment_tables(net: SubNetwork, curve: PowerCurve):
    """min_inc[n][c]: least power increase from c more cores on node n at any load."""
    out = []
    for n in range(net.n_nodes):
        cap = int(net.capacity[n])
        tab = curve.table(cap)
        inc = np.zeros(cap + 1)
        for c in range(1, cap + 1):
            inc[c] = np.min(tab[c:] - tab[:cap + 1 - c])
        out.append(inc)
    return out


def exhaustive_optimum(net: SubNetwork, requests: list[Request], epsilon: float = 0.2,
                       curve: PowerCurve | None = None, switch_kw: float = 30.0,
                       step_cap: int | None = None) -> StrategyResult:
    """Minimum-power placement serving every request, by exact enumeration.

    Raises :class:`InstanceTooLarge` beyond 6 nodes or 3 requests. When no
    combination serves all requests the result has no placements and
    ``note == "no feasible solution"``.
    """
    if net.n_nodes > MAX_ORACLE_NODES or len(requests) > MAX_ORACLE_REQUESTS:
        raise InstanceTooLarge(
            f"{net.n_nodes} nodes / {len(requests)} requests exceeds the "
            f"{MAX_ORACLE_NODES}/{MAX_ORACLE_REQUESTS} guard")
    curve = curve or PowerCurve()
    res = StrategyResult("oracle", n_requests=len(requests))
    if not requests:
        return res
    max_cap = int(net.capacity.max())
    tables = np.zeros((net.n_nodes, max_cap + 1))
    for n in range(net.n_nodes):
        cap = int(net.capacity[n])
        tables[n, :cap + 1] = curve.table(cap)
    inc = _increment_tables(net, curve)

    cand = []
    lbs = []
    for req in requests:
        recs, cores, bw, hops = request_candidates(net, req, epsilon, step_cap)
        if not recs:
            res.note = "no feasible solution"
            res.failed = [(r.id, "infeasible") for r in requests]
            return res
        lb_each = np.array([sum(inc[n][c] for n, c in enumerate(row) if c) for row in cores])
        lb_each = lb_each + switch_kw * hops
        order = np.lexsort((np.arange(len(recs)), lb_each))
        cand.append(([recs[i] for i in order], cores[order], bw[order], hops[order]))
        lbs.append(float(lb_each.min()))
    suffix = np.zeros(len(requests) + 1)
    for r in range(len(requests) - 1, -1, -1):
        suffix[r] = suffix[r + 1] + lbs[r]

    best, choice = kernels.joint_search(
        [c[1] for c in cand], [c[2] for c in cand], [c[3] for c in cand], suffix, tables,
        net.capacity.astype(np.int64), net.link_capacity.astype(np.int64), float(switch_kw))
    if choice is None:
        res.note = "no feasible solution"
        res.failed = [(r.id, "infeasible") for r in requests]
        return res
    res.placements = [cand[r][0][k] for r, k in enumerate(choice)]
    res.power_kw = episode_power(res.placements, net, curve, switch_kw)
    return res


def check_served(result: StrategyResult, net: SubNetwork, epsilon: float) -> bool:
    """Replay a result's served records on a fresh ledger through the constraint engine."""
    ledger = ResourceLedger.full(net)
    for rec in result.placements:
        if not feasible(rec, ledger, net, epsilon).ok or steps_needed(rec) > 4 * net.n_nodes:
            return False
        commit(ledger, rec, net, epsilon)
    return True

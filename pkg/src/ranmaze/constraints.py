"""Feasibility of a single request's placement and routing.

A :class:`Placement` is the walk a request's traffic takes from its entrance
to the UPF host, plus the walk index at which each chain function sits.
Latencies are cumulative km from the entrance, so the fronthaul, midhaul
and end-to-end paths are prefixes of the same walk.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .netmodel import FUNCTIONS, Request, ResourceLedger, SubNetwork

DU, CU_UP, CU_CP, UPF = range(4)
CONSTRAINT_ORDER = ("C1", "C2", "C3", "C4", "C5", "DU")


def stage_factor(stage: int, epsilon: float) -> float:
    """Traffic multiplier on a hop taken while ``stage`` is the next function.

    Fronthaul carries the full demand, the DU-to-CU stage one decrease and
    the CU-to-UPF stage two.
    """
    return (1.0, epsilon, epsilon, epsilon * epsilon)[stage]


def stage_mgbps(request: Request, stage: int, epsilon: float) -> int:
    return int(round(request.mgbps * stage_factor(stage, epsilon)))


class IncompleteRecord(ValueError):
    pass


class Check(NamedTuple):
    ok: bool
    slack: float | None = None
    detail: object = None


class Verdict(NamedTuple):
    ok: bool
    violated: str | None = None


@dataclass
class Placement:
    request: Request
    route: list[int] = field(default_factory=list)
    place_at: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.route:
            self.route = [self.request.entrance]

    @property
    def hosts(self) -> list[int]:
        return [self.route[i] for i in self.place_at]

    @property
    def hops(self) -> int:
        return len(self.route) - 1

    @property
    def complete(self) -> bool:
        return len(self.place_at) == len(FUNCTIONS)

    def host_of(self, function: int) -> int:
        if function >= len(self.place_at):
            raise IncompleteRecord(f"{FUNCTIONS[function]} not placed")
        return self.route[self.place_at[function]]

    def km_at(self, net: SubNetwork, index: int) -> float:
        total = 0.0
        for a, b in zip(self.route[:index], self.route[1:index + 1]):
            total += net.arc_km[net.arc_of[(a, b)]]
        return total

    def traversals(self, net: SubNetwork, epsilon: float) -> list[tuple[int, int]]:
        """(physical link, mGbps) for every hop on the walk."""
        out = []
        stage = 0
        placed = iter(self.place_at)
        nxt = next(placed, None)
        for i, (a, b) in enumerate(zip(self.route, self.route[1:])):
            while nxt is not None and nxt <= i:
                stage += 1
                nxt = next(placed, None)
            link = int(net.arc_link[net.arc_of[(a, b)]])
            out.append((link, stage_mgbps(self.request, min(stage, 3), epsilon)))
        return out

    def compute_claims(self) -> dict[int, int]:
        claims: dict[int, int] = {}
        for v, host in enumerate(self.hosts):
            claims[host] = claims.get(host, 0) + self.request.cores[v]
        return claims

    def validate_walk(self, net: SubNetwork):
        for a, b in zip(self.route, self.route[1:]):
            if (a, b) not in net.arc_of:
                raise ValueError(f"no link {a}->{b}")
        if any(j < i for i, j in zip(self.place_at, self.place_at[1:])):
            raise ValueError("functions out of chain order on the walk")
        if self.place_at and self.place_at[-1] >= len(self.route):
            raise ValueError("placement index beyond the walk")


def _latency_check(record: Placement, net: SubNetwork, function: int, budget: float) -> Check:
    record.host_of(function)
    km = record.km_at(net, record.place_at[function])
    return Check(km <= budget, budget - km, km)


def check_fronthaul(record: Placement, net: SubNetwork) -> Check:
    return _latency_check(record, net, DU, record.request.fronthaul_km)


def check_midhaul(record: Placement, net: SubNetwork) -> Check:
    return _latency_check(record, net, CU_CP, record.request.midhaul_km)


def check_end_to_end(record: Placement, net: SubNetwork) -> Check:
    res = _latency_check(record, net, UPF, record.request.e2e_km)
    if record.request.fixed_destination and record.host_of(UPF) != net.gc_node:
        return Check(False, res.slack, "UPF must terminate at the 5GC node")
    return res


def check_compute(ledger: ResourceLedger, record: Placement) -> Check:
    over = {n: c - int(ledger.compute[n]) for n, c in record.compute_claims().items()
            if c > ledger.compute[n]}
    return Check(not over, None, over)


def check_bandwidth(ledger: ResourceLedger, record: Placement, net: SubNetwork,
                    epsilon: float) -> Check:
    load: dict[int, int] = {}
    for link, mg in record.traversals(net, epsilon):
        load[link] = load.get(link, 0) + mg
    over = {l: c - int(ledger.bandwidth[l]) for l, c in load.items() if c > ledger.bandwidth[l]}
    return Check(not over, None, over)


def check_du_capability(record: Placement, net: SubNetwork) -> Check:
    return Check(bool(net.du_capable[record.host_of(DU)]))


def feasible(record: Placement, ledger: ResourceLedger, net: SubNetwork,
             epsilon: float) -> Verdict:
    """All constraints for one complete record against the resources left before it."""
    if not record.complete:
        raise IncompleteRecord("record does not place the whole chain")
    record.validate_walk(net)
    checks = (
        ("C1", lambda: check_fronthaul(record, net)),
        ("C2", lambda: check_midhaul(record, net)),
        ("C3", lambda: check_end_to_end(record, net)),
        ("C4", lambda: check_compute(ledger, record)),
        ("C5", lambda: check_bandwidth(ledger, record, net, epsilon)),
        ("DU", lambda: check_du_capability(record, net)),
    )
    for name, fn in checks:
        if not fn().ok:
            return Verdict(False, name)
    return Verdict(True)


def commit(ledger: ResourceLedger, record: Placement, net: SubNetwork, epsilon: float):
    """Reserve a feasible record's resources on the ledger."""
    for n, c in record.compute_claims().items():
        ledger.reserve_node(n, c)
    for link, mg in record.traversals(net, epsilon):
        ledger.reserve_link(link, mg)


def steps_needed(record: Placement) -> int:
    """Fewest maze steps that realise this walk (one hop and one placement per step)."""
    arrivals = {i for i in record.place_at if i > 0}
    return record.hops + len(record.place_at) - len(arrivals)


def shortest_path(net: SubNetwork, src: int, dst: int, weight: str = "km",
                  usable=None) -> list[int] | None:
    """Dijkstra over arcs; ``usable(arc) -> bool`` filters arcs. Ties by node order."""
    import heapq
    if src == dst:
        return [src]
    dist = {src: (0.0, 0)}
    prev: dict[int, int] = {}
    heap = [((0.0, 0), src)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == dst:
            break
        for ai in net.out_arcs[u]:
            if usable is not None and not usable(ai):
                continue
            v = net.arcs[ai][1]
            step = (net.arc_km[ai], 1)
            if weight == "hops":
                nd = (d[0] + 1, d[1] + step[0])
            else:
                nd = (d[0] + step[0], d[1] + 1)
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if dst not in dist:
        return None
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    return path[::-1]


def compute_loads(records, n_nodes: int) -> np.ndarray:
    loads = np.zeros(n_nodes, dtype=np.int64)
    for r in records:
        for n, c in r.compute_claims().items():
            loads[n] += c
    return loads

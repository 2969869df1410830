"""Pure-Python/numpy implementations of the hot kernels.

Mirrors ``_ckernels.pyx`` operation for operation (including floating-point
summation order) so both backends give bit-identical results.
"""
from __future__ import annotations

import math

import numpy as np


def aggregate(adj: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Batched ``adj @ x`` over the node axis (second to last)."""
    return np.matmul(adj, x)


def enumerate_walks(out_start, out_dst, out_km, out_link, du_capable, capacity,
                    link_capacity, gc, entrance, cores, stage_bw, budgets, fixed_dest,
                    step_cap):
    """Every single-request walk that respects latency, DU, compute and bandwidth.

    Walks are simple between consecutive hosts; a walk that repeats a node
    inside one segment is never better than its shortcut. Returns a list of
    ``(route, place_at)`` tuples in depth-first order (place before move,
    out-arcs in stored order).
    """
    yf, ym, ye = budgets
    n = len(capacity)
    load = [0] * n
    bw = [0] * len(link_capacity)
    route = [entrance]
    place_at: list[int] = []
    visited = [False] * n
    visited[entrance] = True
    out = []
    limits = (yf, ym, ym, ye)

    def rec(node, stage, km):
        nonlocal visited
        c = cores[stage]
        if load[node] + c <= capacity[node]:
            if stage == 0:
                ok = bool(du_capable[node]) and km <= yf
            elif stage == 2:
                ok = km <= ym
            elif stage == 3:
                ok = km <= ye and (not fixed_dest or node == gc)
            else:
                ok = True
            if ok:
                load[node] += c
                place_at.append(len(route) - 1)
                if stage == 3:
                    arrivals = len({i for i in place_at if i > 0})
                    if len(route) - 1 + 4 - arrivals <= step_cap:
                        out.append((tuple(route), tuple(place_at)))
                else:
                    saved = visited
                    visited = [False] * n
                    visited[node] = True
                    rec(node, stage + 1, km)
                    visited = saved
                place_at.pop()
                load[node] -= c
        lim = limits[stage]
        b = stage_bw[stage]
        for a in range(out_start[node], out_start[node + 1]):
            v = int(out_dst[a])
            if visited[v]:
                continue
            nk = km + out_km[a]
            if nk > lim:
                continue
            link = out_link[a]
            if bw[link] + b > link_capacity[link]:
                continue
            bw[link] += b
            visited[v] = True
            route.append(v)
            rec(v, stage, nk)
            route.pop()
            visited[v] = False
            bw[link] -= b

    rec(entrance, 0, 0.0)
    return out


def _power(tables, loads_row, n_nodes):
    p = 0.0
    for nd in range(n_nodes):
        p += tables[nd, loads_row[nd]]
    return p


def joint_search(cores_list, bw_list, hops_list, lb_suffix, tables, capacity, link_capacity,
                 switch_kw):
    """Branch and bound over one candidate per request.

    ``lb_suffix[r]`` lower-bounds the power that requests r.. add to any
    partial solution. Returns ``(best_power, choices)``; ``choices`` is None
    when no combination fits. Only strict improvements replace the incumbent,
    so ties keep the first combination in enumeration order.
    """
    n_req = len(cores_list)
    n_nodes = len(capacity)
    best = [math.inf, None]
    loads = np.zeros(n_nodes, dtype=np.int64)
    bw = np.zeros(len(link_capacity), dtype=np.int64)
    choice = [0] * n_req

    def rec(r, hops):
        cores, cbw, chops = cores_list[r], bw_list[r], hops_list[r]
        new_loads = loads + cores
        fits = np.all(new_loads <= capacity, axis=1)
        if cbw.shape[1]:
            fits &= np.all(bw + cbw <= link_capacity, axis=1)
        idx = np.flatnonzero(fits)
        if idx.size == 0:
            return
        nl = new_loads[idx]
        part = np.zeros(idx.size)
        for nd in range(n_nodes):
            part += tables[nd, nl[:, nd]]
        part += switch_kw * (hops + chops[idx])
        if r == n_req - 1:
            for j in range(idx.size):
                if part[j] < best[0]:
                    best[0] = float(part[j])
                    choice[r] = int(idx[j])
                    best[1] = list(choice)
            return
        for j in range(idx.size):
            if part[j] + lb_suffix[r + 1] >= best[0] + 1e-9:
                continue
            k = idx[j]
            loads[:] += cores[k]
            bw[:] += cbw[k]
            choice[r] = int(k)
            rec(r + 1, hops + int(chops[k]))
            loads[:] -= cores[k]
            bw[:] -= cbw[k]

    if n_req == 0:
        return 0.0, []
    rec(0, 0)
    return best[0], best[1]

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the walk enumerator and the joint branch-and-bound.

Same traversal order and floating-point summation order as ``_pykernels``.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free
from libc.string cimport memset

cnp.import_array()


def aggregate(adj, x):
    return np.matmul(adj, x)


cdef struct WalkCtx:
    const long long *out_start
    const long long *out_dst
    const double *out_km
    const long long *out_link
    const unsigned char *du_capable
    const long long *capacity
    const long long *link_capacity
    long long gc
    long long cores[4]
    long long stage_bw[4]
    double limits[4]
    int fixed_dest
    long long step_cap
    int n
    long long *load
    long long *bw
    long long *route
    int route_len
    long long place_at[4]
    int n_placed
    unsigned char *visited   # 4 rows of n flags, one per chain segment


cdef void _emit(WalkCtx *c, list out):
    cdef int i
    cdef int arrivals = 0
    cdef long long prev = 0
    for i in range(4):
        if c.place_at[i] > 0 and c.place_at[i] != prev:
            arrivals += 1
        prev = c.place_at[i]
    if c.route_len - 1 + 4 - arrivals <= c.step_cap:
        out.append((tuple([c.route[i] for i in range(c.route_len)]),
                    tuple([c.place_at[i] for i in range(4)])))


cdef void _walk(WalkCtx *c, long long node, int stage, double km, list out):
    cdef long long cc = c.cores[stage]
    cdef bint ok
    cdef long long a, v, link, b
    cdef double nk
    cdef unsigned char *vis = c.visited + stage * c.n
    cdef unsigned char *nxt
    if c.load[node] + cc <= c.capacity[node]:
        if stage == 0:
            ok = c.du_capable[node] != 0 and km <= c.limits[0]
        elif stage == 2:
            ok = km <= c.limits[2]
        elif stage == 3:
            ok = km <= c.limits[3] and (not c.fixed_dest or node == c.gc)
        else:
            ok = True
        if ok:
            c.load[node] += cc
            c.place_at[stage] = c.route_len - 1
            c.n_placed += 1
            if stage == 3:
                _emit(c, out)
            else:
                nxt = c.visited + (stage + 1) * c.n
                memset(nxt, 0, c.n)
                nxt[node] = 1
                _walk(c, node, stage + 1, km, out)
            c.n_placed -= 1
            c.load[node] -= cc
    b = c.stage_bw[stage]
    for a in range(c.out_start[node], c.out_start[node + 1]):
        v = c.out_dst[a]
        if vis[v]:
            continue
        nk = km + c.out_km[a]
        if nk > c.limits[stage]:
            continue
        link = c.out_link[a]
        if c.bw[link] + b > c.link_capacity[link]:
            continue
        c.bw[link] += b
        vis[v] = 1
        c.route[c.route_len] = v
        c.route_len += 1
        _walk(c, v, stage, nk, out)
        c.route_len -= 1
        vis[v] = 0
        c.bw[link] -= b


def enumerate_walks(out_start, out_dst, out_km, out_link, du_capable, capacity,
                    link_capacity, long long gc, long long entrance, cores, stage_bw,
                    budgets, bint fixed_dest, long long step_cap):
    cdef cnp.int64_t[::1] s_v = np.ascontiguousarray(out_start, dtype=np.int64)
    cdef cnp.int64_t[::1] d_v = np.ascontiguousarray(out_dst, dtype=np.int64)
    cdef double[::1] k_v = np.ascontiguousarray(out_km, dtype=np.float64)
    cdef cnp.int64_t[::1] l_v = np.ascontiguousarray(out_link, dtype=np.int64)
    cdef cnp.uint8_t[::1] du_v = np.ascontiguousarray(du_capable, dtype=np.uint8)
    cdef cnp.int64_t[::1] cap_v = np.ascontiguousarray(capacity, dtype=np.int64)
    cdef cnp.int64_t[::1] lcap_v = np.ascontiguousarray(link_capacity, dtype=np.int64)
    cdef cnp.int64_t[::1] load = np.zeros(len(cap_v), dtype=np.int64)
    cdef cnp.int64_t[::1] bw = np.zeros(max(len(lcap_v), 1), dtype=np.int64)
    cdef int n = len(cap_v)
    # segments are simple paths, so a route never exceeds 4 * n nodes
    cdef cnp.int64_t[::1] route = np.zeros(4 * n + 1, dtype=np.int64)
    cdef cnp.uint8_t[::1] visited = np.zeros(4 * n, dtype=np.uint8)
    cdef WalkCtx c
    cdef int i
    cdef list out = []
    yf, ym, ye = budgets
    c.out_start = <const long long *> &s_v[0]
    c.out_dst = <const long long *> &d_v[0] if len(d_v) else NULL
    c.out_km = &k_v[0] if len(k_v) else NULL
    c.out_link = <const long long *> &l_v[0] if len(l_v) else NULL
    c.du_capable = &du_v[0]
    c.capacity = <const long long *> &cap_v[0]
    c.link_capacity = <const long long *> &lcap_v[0] if len(lcap_v) else NULL
    c.gc = gc
    for i in range(4):
        c.cores[i] = cores[i]
        c.stage_bw[i] = stage_bw[i]
        c.place_at[i] = 0
    c.limits[0] = yf
    c.limits[1] = ym
    c.limits[2] = ym
    c.limits[3] = ye
    c.fixed_dest = fixed_dest
    c.step_cap = step_cap
    c.n = n
    c.load = <long long *> &load[0]
    c.bw = <long long *> &bw[0]
    c.route = <long long *> &route[0]
    c.route[0] = entrance
    c.route_len = 1
    c.n_placed = 0
    c.visited = &visited[0]
    c.visited[entrance] = 1
    _walk(&c, entrance, 0, 0.0, out)
    return out


cdef struct SearchCtx:
    int n_req
    int n_nodes
    int n_links
    long long **cores       # per request: (K_r, n_nodes) row-major
    long long **bw          # per request: (K_r, n_links)
    long long **hops        # per request: (K_r,)
    long long *n_cand
    const double *lb_suffix
    const double *tables
    int table_width
    const long long *capacity
    const long long *link_capacity
    double switch_kw
    long long *loads
    long long *used_bw
    long long *choice
    long long *best_choice
    double best
    bint found


cdef void _search(SearchCtx *s, int r, long long hops):
    cdef long long k, K = s.n_cand[r]
    cdef int nd, l
    cdef long long *crow
    cdef long long *brow
    cdef bint fits
    cdef double part
    for k in range(K):
        crow = s.cores[r] + k * s.n_nodes
        fits = True
        for nd in range(s.n_nodes):
            if s.loads[nd] + crow[nd] > s.capacity[nd]:
                fits = False
                break
        if not fits:
            continue
        brow = s.bw[r] + k * s.n_links
        for l in range(s.n_links):
            if s.used_bw[l] + brow[l] > s.link_capacity[l]:
                fits = False
                break
        if not fits:
            continue
        part = 0.0
        for nd in range(s.n_nodes):
            part += s.tables[nd * s.table_width + s.loads[nd] + crow[nd]]
        part += s.switch_kw * <double> (hops + s.hops[r][k])
        if r == s.n_req - 1:
            if part < s.best:
                s.best = part
                s.choice[r] = k
                for l in range(s.n_req):
                    s.best_choice[l] = s.choice[l]
                s.found = True
            continue
        if part + s.lb_suffix[r + 1] >= s.best + 1e-9:
            continue
        for nd in range(s.n_nodes):
            s.loads[nd] += crow[nd]
        for l in range(s.n_links):
            s.used_bw[l] += brow[l]
        s.choice[r] = k
        _search(s, r + 1, hops + s.hops[r][k])
        for nd in range(s.n_nodes):
            s.loads[nd] -= crow[nd]
        for l in range(s.n_links):
            s.used_bw[l] -= brow[l]


def joint_search(cores_list, bw_list, hops_list, lb_suffix, tables, capacity, link_capacity,
                 double switch_kw):
    cdef int n_req = len(cores_list)
    if n_req == 0:
        return 0.0, []
    cdef SearchCtx s
    keep = []
    cores_c = [np.ascontiguousarray(c, dtype=np.int64) for c in cores_list]
    bw_c = [np.ascontiguousarray(b, dtype=np.int64) for b in bw_list]
    hops_c = [np.ascontiguousarray(h, dtype=np.int64) for h in hops_list]
    cdef cnp.int64_t[::1] n_cand = np.array([len(h) for h in hops_c], dtype=np.int64)
    cdef double[::1] lb = np.ascontiguousarray(lb_suffix, dtype=np.float64)
    cdef double[:, ::1] tab = np.ascontiguousarray(tables, dtype=np.float64)
    cdef cnp.int64_t[::1] cap = np.ascontiguousarray(capacity, dtype=np.int64)
    lcap_arr = np.ascontiguousarray(link_capacity, dtype=np.int64)
    cdef int n_links = len(lcap_arr)
    cdef cnp.int64_t[::1] lcap = np.zeros(max(n_links, 1), dtype=np.int64)
    cdef int i
    for i in range(n_links):
        lcap[i] = lcap_arr[i]
    cdef cnp.int64_t[::1] loads = np.zeros(len(cap), dtype=np.int64)
    cdef cnp.int64_t[::1] used_bw = np.zeros(max(n_links, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] choice = np.zeros(n_req, dtype=np.int64)
    cdef cnp.int64_t[::1] best_choice = np.zeros(n_req, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] cv
    cdef cnp.int64_t[:, ::1] bv
    cdef cnp.int64_t[::1] hv
    s.cores = <long long **> malloc(n_req * sizeof(long long *))
    s.bw = <long long **> malloc(n_req * sizeof(long long *))
    s.hops = <long long **> malloc(n_req * sizeof(long long *))
    # padded copies keep every pointer valid even for empty candidate sets
    try:
        for i in range(n_req):
            c_arr = np.zeros((max(len(hops_c[i]), 1), len(cap)), dtype=np.int64)
            c_arr[:len(hops_c[i])] = cores_c[i].reshape(len(hops_c[i]), len(cap))
            b_arr = np.zeros((max(len(hops_c[i]), 1), max(n_links, 1)), dtype=np.int64)
            if n_links:
                b_arr[:len(hops_c[i]), :n_links] = bw_c[i].reshape(len(hops_c[i]), n_links)
            h_arr = np.zeros(max(len(hops_c[i]), 1), dtype=np.int64)
            h_arr[:len(hops_c[i])] = hops_c[i]
            keep.extend([c_arr, b_arr, h_arr])
            cv = c_arr
            bv = b_arr
            hv = h_arr
            s.cores[i] = <long long *> &cv[0, 0]
            s.bw[i] = <long long *> &bv[0, 0]
            s.hops[i] = <long long *> &hv[0]
        s.n_req = n_req
        s.n_nodes = len(cap)
        s.n_links = n_links
        s.n_cand = <long long *> &n_cand[0]
        s.lb_suffix = &lb[0]
        s.tables = &tab[0, 0]
        s.table_width = tab.shape[1]
        s.capacity = <const long long *> &cap[0]
        s.link_capacity = <const long long *> &lcap[0]
        s.switch_kw = switch_kw
        s.loads = <long long *> &loads[0]
        s.used_bw = <long long *> &used_bw[0]
        s.choice = <long long *> &choice[0]
        s.best_choice = <long long *> &best_choice[0]
        s.best = np.inf
        s.found = False
        _search(&s, 0, 0)
    finally:
        free(s.cores)
        free(s.bw)
        free(s.hops)
    if not s.found:
        return float(np.inf), None
    return s.best, [int(best_choice[i]) for i in range(n_req)]

"""Topologies, requests and resource bookkeeping.

Nodes are addressed internally by their position in the config's node list;
the config's own ``id`` labels are kept only for display and lookup.
Bandwidth is stored as integer mGbps so ledger arithmetic stays exact.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

FUNCTIONS = ("DU", "CU-UP", "CU-CP", "UPF")
SERVICE_TYPES = ("uRLLC", "eMBB", "mMTC")
MGBPS = 1000  # mGbps per Gbps

# Request parameter ranges per service type (inclusive).
DEFAULT_REQUEST_RANGES: dict[str, dict[str, list[float]]] = {
    "uRLLC": {"fronthaul_km": [13, 20], "midhaul_km": [30, 40], "e2e_km": [30, 40],
              "du_cores": [15, 25], "cuup_cores": [5, 10], "cucp_cores": [5, 10],
              "upf_cores": [15, 25], "gbps": [2, 4]},
    "eMBB": {"fronthaul_km": [15, 25], "midhaul_km": [30, 40], "e2e_km": [100, 100],
             "du_cores": [15, 25], "cuup_cores": [15, 25], "cucp_cores": [5, 10],
             "upf_cores": [15, 25], "gbps": [4, 7]},
    "mMTC": {"fronthaul_km": [15, 25], "midhaul_km": [30, 40], "e2e_km": [100, 100],
             "du_cores": [15, 25], "cuup_cores": [5, 10], "cucp_cores": [15, 25],
             "upf_cores": [15, 25], "gbps": [4, 7]},
}
CORE_KEYS = ("du_cores", "cuup_cores", "cucp_cores", "upf_cores")


class ConfigError(ValueError):
    """Raised when a topology document fails validation."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class InsufficientResource(RuntimeError):
    def __init__(self, kind: str, index: int, deficit: int):
        super().__init__(f"insufficient {kind} at {index}: short by {deficit}")
        self.kind = kind
        self.index = index
        self.deficit = deficit


@dataclass(frozen=True)
class NodeSpec:
    id: Any
    compute_capacity: int
    du_capable: bool


@dataclass(frozen=True)
class LinkSpec:
    """A physical link. Undirected links are expanded into two arcs sharing one pool."""
    src: int
    dst: int
    km: float
    mgbps: int
    directed: bool = False


@dataclass
class SubNetwork:
    id: int
    nodes: list[NodeSpec]
    links: list[LinkSpec]
    gc_node: int
    entrances: list[int]
    max_out_degree: int = field(init=False)

    def __post_init__(self):
        n = len(self.nodes)
        self.capacity = np.array([nd.compute_capacity for nd in self.nodes], dtype=np.int64)
        self.du_capable = np.array([nd.du_capable for nd in self.nodes], dtype=bool)
        self.link_capacity = np.array([lk.mgbps for lk in self.links], dtype=np.int64)
        # arcs: (src, dst, km, physical link index)
        arcs = []
        for li, lk in enumerate(self.links):
            arcs.append((lk.src, lk.dst, lk.km, li))
            if not lk.directed:
                arcs.append((lk.dst, lk.src, lk.km, li))
        self.arcs = arcs
        self.arc_of = {(a[0], a[1]): ai for ai, a in enumerate(arcs)}
        out = [[] for _ in range(n)]
        for ai, (s, d, _, _) in enumerate(arcs):
            out[s].append(ai)
        # fixed out-edge ordering: by destination index
        self.out_arcs = [sorted(lst, key=lambda ai: arcs[ai][1]) for lst in out]
        self.max_out_degree = max((len(o) for o in self.out_arcs), default=0)
        self.arc_km = np.array([a[2] for a in arcs], dtype=float)
        self.arc_link = np.array([a[3] for a in arcs], dtype=np.int64)
        nbrs = [set() for _ in range(n)]
        for s, d, _, _ in arcs:
            nbrs[s].add(d)
            nbrs[d].add(s)
        self.neighbors = [sorted(s) for s in nbrs]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def index_of(self, label) -> int:
        for i, nd in enumerate(self.nodes):
            if nd.id == label:
                return i
        raise KeyError(label)

    def fingerprint(self) -> str:
        """Stable digest of node ordering and links; codecs are keyed on it."""
        import hashlib
        parts = [repr([(nd.id, nd.compute_capacity, nd.du_capable) for nd in self.nodes]),
                 repr([(lk.src, lk.dst, lk.km, lk.mgbps, lk.directed) for lk in self.links]),
                 repr(self.gc_node)]
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]

    def reachable_from(self, start: int) -> set[int]:
        seen = {start}
        todo = deque([start])
        while todo:
            u = todo.popleft()
            for ai in self.out_arcs[u]:
                v = self.arcs[ai][1]
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
        return seen


@dataclass(frozen=True)
class Request:
    id: int
    service_type: str
    entrance: int
    cores: tuple[int, int, int, int]  # DU, CU-UP, CU-CP, UPF
    mgbps: int                        # fronthaul demand
    fronthaul_km: float
    midhaul_km: float
    e2e_km: float

    @property
    def fixed_destination(self) -> bool:
        return self.service_type != "uRLLC"

    @property
    def gbps(self) -> float:
        return self.mgbps / MGBPS


class ResourceLedger:
    """Remaining compute per node and bandwidth per physical link."""

    def __init__(self, capacity, link_capacity):
        self.capacity = np.asarray(capacity, dtype=np.int64)
        self.link_capacity = np.asarray(link_capacity, dtype=np.int64)
        self.compute = self.capacity.copy()
        self.bandwidth = self.link_capacity.copy()

    @classmethod
    def full(cls, net: SubNetwork) -> "ResourceLedger":
        return cls(net.capacity, net.link_capacity)

    def copy(self) -> "ResourceLedger":
        new = ResourceLedger.__new__(ResourceLedger)
        new.capacity = self.capacity
        new.link_capacity = self.link_capacity
        new.compute = self.compute.copy()
        new.bandwidth = self.bandwidth.copy()
        return new

    def restore(self, other: "ResourceLedger"):
        self.compute[:] = other.compute
        self.bandwidth[:] = other.bandwidth

    def __eq__(self, other):
        if not isinstance(other, ResourceLedger):
            return NotImplemented
        return (np.array_equal(self.compute, other.compute)
                and np.array_equal(self.bandwidth, other.bandwidth))

    def reserve_node(self, node: int, cores: int):
        left = int(self.compute[node])
        if cores > left:
            raise InsufficientResource("compute", node, cores - left)
        self.compute[node] = left - cores

    def release_node(self, node: int, cores: int):
        val = int(self.compute[node]) + cores
        if val > self.capacity[node]:
            raise ValueError(f"release exceeds capacity at node {node}")
        self.compute[node] = val

    def reserve_link(self, link: int, mgbps: int):
        left = int(self.bandwidth[link])
        if mgbps > left:
            raise InsufficientResource("bandwidth", link, mgbps - left)
        self.bandwidth[link] = left - mgbps

    def release_link(self, link: int, mgbps: int):
        val = int(self.bandwidth[link]) + mgbps
        if val > self.link_capacity[link]:
            raise ValueError(f"release exceeds capacity on link {link}")
        self.bandwidth[link] = val

    def used_compute(self) -> np.ndarray:
        return self.capacity - self.compute


# --- config loading -------------------------------------------------------

def _require(doc: dict, key: str, where: str):
    if not isinstance(doc, dict) or key not in doc:
        raise ConfigError(f"{where}.{key}" if where else key, "missing")
    return doc[key]


def _parse_subnetwork(i: int, doc: dict) -> SubNetwork:
    where = f"subnetworks[{i}]"
    raw_nodes = _require(doc, "nodes", where)
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise ConfigError(f"{where}.nodes", "must be a non-empty list")
    nodes = []
    for j, nd in enumerate(raw_nodes):
        w = f"{where}.nodes[{j}]"
        nid = _require(nd, "id", w)
        cores = _require(nd, "cores", w)
        if not isinstance(cores, int) or isinstance(cores, bool) or cores <= 0:
            raise ConfigError(f"{w}.cores", "must be a positive integer")
        nodes.append(NodeSpec(nid, cores, bool(nd.get("du_capable", False))))
    labels = [nd.id for nd in nodes]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{where}.nodes", "duplicate node id")
    index = {lab: k for k, lab in enumerate(labels)}

    links = []
    pairs = set()
    for j, lk in enumerate(doc.get("links") or []):
        w = f"{where}.links[{j}]"
        src, dst = _require(lk, "from", w), _require(lk, "to", w)
        for name, lab in (("from", src), ("to", dst)):
            if lab not in index:
                raise ConfigError(f"{w}.{name}", f"unknown node id {lab!r}")
        km = _require(lk, "km", w)
        gbps = _require(lk, "gbps", w)
        if not km > 0:
            raise ConfigError(f"{w}.km", "must be > 0")
        if not gbps > 0:
            raise ConfigError(f"{w}.gbps", "must be > 0")
        s, d = index[src], index[dst]
        if s == d:
            raise ConfigError(w, "self-loop")
        directed = bool(lk.get("directed", False))
        arcs = [(s, d)] if directed else [(s, d), (d, s)]
        for a in arcs:
            if a in pairs:
                raise ConfigError(w, "duplicate link")
            pairs.add(a)
        links.append(LinkSpec(s, d, float(km), int(round(gbps * MGBPS)), directed))

    gc_label = _require(doc, "gc_node", where)
    if gc_label not in index:
        raise ConfigError(f"{where}.gc_node", f"unknown node id {gc_label!r}")
    if not any(nd.du_capable for nd in nodes):
        raise ConfigError(f"{where}.nodes", "no DU-capable node")
    ent_labels = doc.get("entrances")
    if ent_labels is None:
        entrances = list(range(len(nodes)))
    else:
        if not ent_labels:
            raise ConfigError(f"{where}.entrances", "must be non-empty")
        for lab in ent_labels:
            if lab not in index:
                raise ConfigError(f"{where}.entrances", f"unknown node id {lab!r}")
        entrances = [index[lab] for lab in ent_labels]

    net = SubNetwork(int(doc.get("id", i)), nodes, links, index[gc_label], entrances)
    gc = net.gc_node
    for e in entrances:
        if gc not in net.reachable_from(e):
            raise ConfigError(f"{where}.links",
                              f"entrance {labels[e]!r} cannot reach gc_node {gc_label!r}")
    return net


@dataclass
class Deployment:
    """Everything a topology document describes."""
    subnets: list[SubNetwork]
    request_ranges: dict
    max_requests: int | None
    epsilon: float
    power: dict
    seed: int
    raw: dict

    @property
    def global_max_out_degree(self) -> int:
        return max(n.max_out_degree for n in self.subnets)


def load_topology(source) -> Deployment:
    """Parse and validate a topology document (path, YAML/JSON text, or dict)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = None
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                         and Path(source).exists()):
            text = Path(source).read_text(encoding="utf-8")
        elif isinstance(source, str):
            text = source
        else:
            raise ConfigError("source", "expected a path, text, or mapping")
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError("document", f"not parseable: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("document", "top level must be a mapping")

    raw_subnets = _require(doc, "subnetworks", "")
    if not isinstance(raw_subnets, list) or not raw_subnets:
        raise ConfigError("subnetworks", "must be a non-empty list")
    subnets = [_parse_subnetwork(i, sd) for i, sd in enumerate(raw_subnets)]

    req_doc = doc.get("requests") or {}
    ranges = {t: dict(v) for t, v in DEFAULT_REQUEST_RANGES.items()}
    for t, spec in (req_doc.get("types") or {}).items():
        if t not in SERVICE_TYPES:
            raise ConfigError(f"requests.types.{t}", "unknown service type")
        for key, val in spec.items():
            if key not in ranges[t]:
                raise ConfigError(f"requests.types.{t}.{key}", "unknown field")
            if not (isinstance(val, (list, tuple)) and len(val) == 2 and val[0] <= val[1]):
                raise ConfigError(f"requests.types.{t}.{key}", "must be [lo, hi] with lo <= hi")
            ranges[t][key] = list(val)
    max_req = req_doc.get("max_per_episode")
    if max_req is not None and (not isinstance(max_req, int) or max_req < 0):
        raise ConfigError("requests.max_per_episode", "must be a non-negative integer")

    power = {"idle_kw": 150.0, "max_kw": 350.0, "switch_kw": 30.0}
    power.update(doc.get("power") or {})
    if power["max_kw"] < power["idle_kw"]:
        raise ConfigError("power.max_kw", "must be >= idle_kw")
    eps = float((doc.get("traffic") or {}).get("epsilon", 0.2))
    if not 0 < eps <= 1:
        raise ConfigError("traffic.epsilon", "must be in (0, 1]")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed", "must be an integer")
    return Deployment(subnets, ranges, max_req, eps, power, seed, doc)


# --- request sampling -----------------------------------------------------

def _uniform_int(rng, lo, hi) -> int:
    return int(rng.integers(int(lo), int(hi) + 1))


def draw_request(rng, rid: int, service_type: str, entrance: int, ranges: dict) -> Request:
    rg = ranges[service_type]
    cores = tuple(_uniform_int(rng, *rg[k]) for k in CORE_KEYS)
    lo, hi = rg["gbps"]
    # tenth-Gbps granularity
    tenths = _uniform_int(rng, round(lo * 10), round(hi * 10))
    yf = _uniform_int(rng, *rg["fronthaul_km"])
    ym = _uniform_int(rng, *rg["midhaul_km"])
    ye = _uniform_int(rng, *rg["e2e_km"])
    ym, ye = min(ym, ye), max(ym, ye)
    yf = min(yf, ym)
    return Request(rid, service_type, entrance, cores, tenths * (MGBPS // 10),
                   float(yf), float(ym), float(ye))


def sample_requests(net: SubNetwork, rng_seed, ranges: dict | None = None,
                    max_count: int | None = None) -> list[Request]:
    """Draw one episode's requests. Deterministic for a fixed seed."""
    ranges = ranges or DEFAULT_REQUEST_RANGES
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    upper = net.n_nodes if max_count is None else min(net.n_nodes, max_count)
    count = _uniform_int(rng, 0, upper)
    out = []
    for rid in range(count):
        stype = SERVICE_TYPES[int(rng.integers(len(SERVICE_TYPES)))]
        entrance = net.entrances[int(rng.integers(len(net.entrances)))]
        out.append(draw_request(rng, rid, stype, entrance, ranges))
    return out


def scale_ranges(ranges: dict, fronthaul_scale: float = 1.0, gbps_scale: float = 1.0) -> dict:
    """Scaled copy of request ranges (used by functional-split presets)."""
    out = {}
    for t, rg in ranges.items():
        rg = {k: list(v) for k, v in rg.items()}
        rg["fronthaul_km"] = [round(x * fronthaul_scale) for x in rg["fronthaul_km"]]
        # fronthaul budget never exceeds the midhaul one
        rg["fronthaul_km"] = [min(x, rg["midhaul_km"][1]) for x in rg["fronthaul_km"]]
        rg["gbps"] = [round(x * gbps_scale, 1) for x in rg["gbps"]]
        out[t] = rg
    return out

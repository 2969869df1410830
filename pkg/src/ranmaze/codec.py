"""Graph view of maze states and the GCN autoencoder that compresses it.

Each sub-network gets its own codec. The encoder (two graph convolutions,
mean pooling over nodes, dense projection) maps any sub-network's state to a
32-long code; the decoder is only needed to train it.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .env import DONE, MazeEnv
from .netmodel import SERVICE_TYPES, CORE_KEYS, Deployment, SubNetwork, sample_requests
from .nn import Adam, Dense, GraphConv, TrainingDiverged, load_params, mse, normalized_adjacency, \
    read_params, save_params

CODE_SIZE = 32
CODEC_SCHEMA = 1


class CodecMismatch(ValueError):
    """A codec was asked to encode a graph from a different topology or schema."""


@dataclass(frozen=True)
class FeatureSpec:
    """Deployment-wide normalisers, so every codec sees values in [0, 1]."""
    max_degree: int
    max_nodes: int
    cap_norm: float
    km_norm: float
    fronthaul_max: float
    midhaul_max: float
    e2e_max: float
    core_max: float
    mgbps_max: float

    @classmethod
    def from_deployment(cls, dep: Deployment) -> "FeatureSpec":
        rg = dep.request_ranges.values()
        return cls(
            max_degree=dep.global_max_out_degree,
            max_nodes=max(n.n_nodes for n in dep.subnets),
            cap_norm=float(max(n.capacity.max() for n in dep.subnets)),
            km_norm=float(max(n.arc_km.max() for n in dep.subnets if len(n.arcs))),
            fronthaul_max=float(max(r["fronthaul_km"][1] for r in rg)),
            midhaul_max=float(max(r["midhaul_km"][1] for r in rg)),
            e2e_max=float(max(r["e2e_km"][1] for r in rg)),
            core_max=float(max(r[k][1] for r in rg for k in CORE_KEYS)),
            mgbps_max=float(max(r["gbps"][1] for r in rg)) * 1000,
        )

    @property
    def width(self) -> int:
        return 5 + 3 * self.max_degree + self.request_width + self.local_width

    @property
    def request_width(self) -> int:
        return len(SERVICE_TYPES) + 3 + 4 + 1 + 4 + 2

    @property
    def local_width(self) -> int:
        return 3 * self.max_nodes + 2 + self.max_degree


@dataclass
class GraphAttributes:
    node_attrs: np.ndarray   # (N, F)
    edge_attrs: np.ndarray   # (A, 2): remaining bandwidth share, length
    edge_index: np.ndarray   # (A, 2)
    fingerprint: str = ""


class GraphBuilder:
    """Turns :class:`~ranmaze.env.EnvState` snapshots of one sub-network into graphs.

    Node columns: remaining/capacity, capacity, DU flag, 5GC flag, agent
    here; then per padded out-edge slot (exists, remaining bandwidth share,
    length); then the request broadcast to every node (service type, three
    latency budgets, four core demands, bandwidth, next function, km walked,
    steps used); then a broadcast view of the agent's node (position one-hot
    padded to the largest sub-network, remaining compute share, DU flag,
    remaining bandwidth share per out-edge slot) and of the compute ledger
    (remaining share and in-use flag of every node, same padding).

    Mean pooling blurs which node carries the "agent here" flag, so the
    broadcast copy is what lets the code keep the position.
    """

    def __init__(self, net: SubNetwork, spec: FeatureSpec, step_cap: int | None = None):
        self.net, self.spec = net, spec
        self.step_cap = step_cap or 4 * net.n_nodes
        n, m = net.n_nodes, spec.max_degree
        self.static = np.zeros((n, 4))
        self.static[:, 1] = net.capacity / spec.cap_norm
        self.static[:, 2] = net.du_capable
        self.static[net.gc_node, 3] = 1.0
        self.slot_arc = -np.ones((n, m), dtype=np.int64)
        for u in range(n):
            for j, ai in enumerate(net.out_arcs[u]):
                self.slot_arc[u, j] = ai
        self.slot_mask = self.slot_arc >= 0
        safe = np.where(self.slot_mask, self.slot_arc, 0)
        self.slot_link = net.arc_link[safe]
        self.slot_km = np.where(self.slot_mask, net.arc_km[safe] / spec.km_norm, 0.0)
        self.edge_index = np.array([(a[0], a[1]) for a in net.arcs], dtype=np.int64).reshape(-1, 2)
        self.arc_km_norm = net.arc_km / spec.km_norm
        self.fingerprint = net.fingerprint()

    def request_vector(self, state) -> np.ndarray:
        sp = self.spec
        vec = np.zeros(self.spec.request_width)
        req = state.request
        if req is None:
            return vec
        vec[SERVICE_TYPES.index(req.service_type)] = 1.0
        o = len(SERVICE_TYPES)
        vec[o:o + 3] = (req.fronthaul_km / sp.fronthaul_max, req.midhaul_km / sp.midhaul_max,
                        req.e2e_km / sp.e2e_max)
        vec[o + 3:o + 7] = np.asarray(req.cores) / sp.core_max
        vec[o + 7] = req.mgbps / sp.mgbps_max
        if state.chain_progress < DONE:
            vec[o + 8 + state.chain_progress] = 1.0
        km = 0.0
        route = state.route
        for a, b in zip(route, route[1:]):
            km += self.net.arc_km[self.net.arc_of[(a, b)]]
        vec[o + 12] = min(km / sp.e2e_max, 1.0)
        vec[o + 13] = min(state.steps_in_request / self.step_cap, 1.0)
        return vec

    def node_matrix(self, state) -> np.ndarray:
        net, n = self.net, self.net.n_nodes
        rem_link = state.bandwidth / net.link_capacity
        cols = [
            (state.compute / net.capacity)[:, None],
            self.static[:, 1:4],
            np.zeros((n, 1)),
        ]
        if 0 <= state.position < n:
            cols[2][state.position, 0] = 1.0
        slots = np.stack([self.slot_mask.astype(float),
                          np.where(self.slot_mask, rem_link[self.slot_link], 0.0),
                          self.slot_km], axis=2).reshape(n, -1)
        req = np.broadcast_to(self.request_vector(state), (n, self.spec.request_width))
        here = np.broadcast_to(self.local_vector(state, rem_link), (n, self.spec.local_width))
        return np.concatenate(cols + [slots, req, here], axis=1)

    def local_vector(self, state, rem_link) -> np.ndarray:
        sp = self.spec
        vec = np.zeros(sp.local_width)
        pos = state.position
        if 0 <= pos < self.net.n_nodes:
            vec[pos] = 1.0
            vec[sp.max_nodes] = state.compute[pos] / self.net.capacity[pos]
            vec[sp.max_nodes + 1] = self.static[pos, 2]
            mask = self.slot_mask[pos]
            vec[sp.max_nodes + 2:sp.max_nodes + 2 + sp.max_degree][mask] = \
                rem_link[self.slot_link[pos][mask]]
        o = sp.max_nodes + 2 + sp.max_degree
        n = self.net.n_nodes
        vec[o:o + n] = state.compute / self.net.capacity
        vec[o + sp.max_nodes:o + sp.max_nodes + n] = state.compute < self.net.capacity
        return vec

    def attrs(self, state) -> GraphAttributes:
        rem = state.bandwidth / self.net.link_capacity
        edge_attrs = np.stack([rem[self.net.arc_link], self.arc_km_norm], axis=1)
        return GraphAttributes(self.node_matrix(state), edge_attrs, self.edge_index,
                               self.fingerprint)


def state_to_graph(state, net: SubNetwork, spec: FeatureSpec) -> GraphAttributes:
    return GraphBuilder(net, spec).attrs(state)


class Codec:
    def __init__(self, net: SubNetwork, width: int, hidden: int = 64, code: int = CODE_SIZE,
                 seed: int = 0, dtype=np.float64):
        self.subnet_id = net.id
        self.fingerprint = net.fingerprint()
        self.n_nodes, self.width, self.hidden, self.code = net.n_nodes, width, hidden, code
        self.adj = normalized_adjacency(net.n_nodes, [(a[0], a[1]) for a in net.arcs])
        rng = np.random.default_rng(seed)
        # encoder layers first: same seed -> same encoder init on every sub-network
        self.enc = [GraphConv(width, hidden, "relu", rng), GraphConv(hidden, hidden, "relu", rng)]
        self.proj = Dense(hidden, code, "linear", rng)
        self.expand = Dense(code, net.n_nodes * hidden, "relu", rng)
        self.dec = [GraphConv(hidden, hidden, "relu", rng), GraphConv(hidden, width, "linear", rng)]
        self.astype(dtype)

    def astype(self, dtype) -> "Codec":
        self.dtype = np.dtype(dtype)
        self.adj = self.adj.astype(dtype)
        for layer in self.layers().values():
            for k in layer.params:
                layer.params[k] = layer.params[k].astype(dtype)
            layer.zero_grad()
        return self

    def layers(self):
        return {"enc0": self.enc[0], "enc1": self.enc[1], "proj": self.proj,
                "expand": self.expand, "dec0": self.dec[0], "dec1": self.dec[1]}

    def named_params(self, encoder_only: bool = False):
        for name, layer in self.layers().items():
            if encoder_only and name not in ("enc0", "enc1", "proj"):
                continue
            for k in layer.params:
                yield f"{name}.{k}", layer, k

    # forward passes on batches (B, N, F)
    def encode_batch(self, x: np.ndarray) -> np.ndarray:
        h = self.enc[0].forward(x, self.adj)
        h = self.enc[1].forward(h, self.adj)
        self._pool_n = h.shape[-2]
        return self.proj.forward(h.mean(axis=-2))

    def decode_batch(self, codes: np.ndarray) -> np.ndarray:
        h = self.expand.forward(codes).reshape(codes.shape[:-1] + (self.n_nodes, self.hidden))
        h = self.dec[0].forward(h, self.adj)
        return self.dec[1].forward(h, self.adj)

    def backward(self, d_recon: np.ndarray):
        d = self.dec[1].backward(d_recon)
        d = self.dec[0].backward(d)
        d = self.expand.backward(d.reshape(d.shape[:-2] + (-1,)))
        d = self.proj.backward(d)
        d = np.repeat(d[..., None, :], self._pool_n, axis=-2) / self._pool_n
        d = self.enc[1].backward(d)
        self.enc[0].backward(d)

    def _check(self, attrs: GraphAttributes):
        if attrs.fingerprint and attrs.fingerprint != self.fingerprint:
            raise CodecMismatch(f"graph from topology {attrs.fingerprint}, codec trained on "
                                f"{self.fingerprint}")
        if attrs.node_attrs.shape != (self.n_nodes, self.width):
            raise CodecMismatch(f"node attributes {attrs.node_attrs.shape}, codec expects "
                                f"{(self.n_nodes, self.width)}")

    def encode(self, attrs: GraphAttributes) -> np.ndarray:
        self._check(attrs)
        return self.encode_batch(attrs.node_attrs[None])[0]

    def decode(self, code: np.ndarray, edge_index=None) -> GraphAttributes:
        nodes = self.decode_batch(np.asarray(code, dtype=float)[None])[0]
        return GraphAttributes(nodes, np.zeros((0, 2)),
                               np.zeros((0, 2), dtype=np.int64) if edge_index is None
                               else np.asarray(edge_index), self.fingerprint)

    def reconstruction_error(self, x: np.ndarray) -> float:
        return float(np.mean((self.decode_batch(self.encode_batch(x)) - x) ** 2))

    def save(self, path):
        save_params(path, self.named_params(), {
            "kind": "codec", "schema": CODEC_SCHEMA, "subnet_id": self.subnet_id,
            "fingerprint": self.fingerprint, "n_nodes": self.n_nodes, "width": self.width,
            "hidden": self.hidden, "code": self.code})

    @classmethod
    def load(cls, path, net: SubNetwork) -> "Codec":
        _, meta = read_params(path)
        if meta.get("kind") != "codec" or meta.get("schema") != CODEC_SCHEMA:
            raise CodecMismatch(f"{path}: not a schema-{CODEC_SCHEMA} codec checkpoint")
        if meta["fingerprint"] != net.fingerprint():
            raise CodecMismatch(f"{path}: trained on topology {meta['fingerprint']}, "
                                f"sub-network is {net.fingerprint()}")
        codec = cls(net, meta["width"], meta["hidden"], meta["code"])
        load_params(path, codec.named_params())
        return codec


def collect_states(net: SubNetwork, dep: Deployment, spec: FeatureSpec, n_states: int,
                   seed: int) -> np.ndarray:
    """Node matrices from a uniform-random walk over each state's valid actions."""
    rng = np.random.default_rng(seed)
    env = MazeEnv(net, spec.max_degree, dep.epsilon)
    builder = GraphBuilder(net, spec, env.step_cap)
    out = []
    while len(out) < n_states:
        reqs = sample_requests(net, rng, dep.request_ranges, dep.max_requests)
        state = env.reset(reqs)
        while not state.terminal:
            out.append(builder.node_matrix(state))
            acts = env.valid_actions()
            state = env.step(acts[int(rng.integers(len(acts)))]).next_state
    return np.stack(out[:n_states])


@dataclass
class CodecConfig:
    hidden: int = 64
    lr: float = 1e-4
    batch_size: int = 100
    max_epochs: int = 400
    patience: int = 20
    time_budget_s: float | None = None
    val_fraction: float = 0.1
    n_states: int = 3000
    target_loss: float | None = None   # stop once validation MSE drops below this
    dtype: str = "float32"             # training precision; the result is float64


def train_codec(states: np.ndarray, net: SubNetwork, config: CodecConfig | None = None,
                seed: int = 0):
    """Fit a codec by minimising reconstruction MSE.

    Returns ``(codec, history)`` where history rows are
    ``(epoch, train_loss, val_loss)``. Stops after ``patience`` epochs without a
    validation improvement, at ``max_epochs`` or when the time budget runs out.
    """
    cfg = config or CodecConfig()
    if len(states) < 10:
        raise ValueError("too few states to train a codec")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(states))
    n_val = max(1, int(len(states) * cfg.val_fraction))
    val, train = states[order[:n_val]], states[order[n_val:]]
    codec = Codec(net, states.shape[-1], cfg.hidden, seed=seed, dtype=cfg.dtype)
    states = states.astype(cfg.dtype)
    opt = Adam(codec.named_params(), cfg.lr)
    history = []
    best, since_best = np.inf, 0
    best_params = None
    start = time.perf_counter()
    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(len(train))
        losses = []
        for i in range(0, len(train), cfg.batch_size):
            xb = train[perm[i:i + cfg.batch_size]]
            opt.zero_grad()
            recon = codec.decode_batch(codec.encode_batch(xb))
            loss, grad = mse(recon, xb)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"codec loss became {loss} at epoch {epoch}")
            codec.backward(grad)
            opt.step()
            losses.append(loss)
        val_loss = float(codec.reconstruction_error(val))
        history.append((epoch, float(np.mean(losses)), val_loss))
        if val_loss < best - 1e-6:
            best, since_best = val_loss, 0
            best_params = [layer.params[k].copy() for _, layer, k in codec.named_params()]
        else:
            since_best += 1
        over_time = cfg.time_budget_s is not None and time.perf_counter() - start > cfg.time_budget_s
        reached = cfg.target_loss is not None and val_loss < cfg.target_loss
        if since_best >= cfg.patience or over_time or reached:
            break
    if best_params is not None:
        for (_, layer, k), p in zip(codec.named_params(), best_params):
            layer.params[k][...] = p
    return codec.astype(np.float64), history

"""Small numpy layer set: dense and graph-convolution layers, losses, Adam.

Arrays default to float64 and are batched along the leading axis. Layers cache their
forward inputs; ``backward`` must follow the matching ``forward``.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import kernels

CHECKPOINT_VERSION = 1


class TrainingDiverged(FloatingPointError):
    pass


class ShapeError(ValueError):
    pass


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, dy: np.ndarray) -> np.ndarray:
    if name == "relu":
        return dy * (z > 0)
    return dy


def _fan_in_uniform(rng, n_out, n_in):
    bound = 1.0 / np.sqrt(n_in)
    return rng.uniform(-bound, bound, size=(n_out, n_in))


class Layer:
    params: dict
    grads: dict

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, activation: str = "relu", rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        self.params = {"W": _fan_in_uniform(rng, n_out, n_in), "b": np.zeros(n_out)}
        self.grads = {}
        self.zero_grad()

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"expected width {self.n_in}, got {x.shape[-1]}")
        self._x = x
        self._z = x @ self.params["W"].T + self.params["b"]
        return _act(self.activation, self._z)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dz = _act_grad(self.activation, self._z, dy)
        dz2 = dz.reshape(-1, self.n_out)
        x2 = self._x.reshape(-1, self.n_in)
        self.grads["W"] += dz2.T @ x2
        self.grads["b"] += dz2.sum(axis=0)
        return dz @ self.params["W"]


def normalized_adjacency(n_nodes: int, edges) -> np.ndarray:
    """Symmetric closed-neighbourhood normalisation.

    Entry (n, m) is 1 / sqrt(|N[n]| |N[m]|) for m in N[n] = neighbours of n plus
    n itself; edge direction is ignored.
    """
    nbrs = [{n} for n in range(n_nodes)]
    for a, b in edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    deg = np.array([len(s) for s in nbrs], dtype=float)
    adj = np.zeros((n_nodes, n_nodes))
    for n, s in enumerate(nbrs):
        for m in s:
            adj[n, m] = 1.0 / np.sqrt(deg[n] * deg[m])
    return adj


class GraphConv(Layer):
    """out[n] = act(W @ sum_{m in N[n]} x[m] / sqrt(|N[n]| |N[m]|)); no bias."""

    def __init__(self, n_in: int, n_out: int, activation: str = "relu", rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        self.params = {"W": _fan_in_uniform(rng, n_out, n_in)}
        self.grads = {}
        self.zero_grad()

    def forward(self, x: np.ndarray, adj: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"expected width {self.n_in}, got {x.shape[-1]}")
        if x.shape[-2] != adj.shape[0]:
            raise ShapeError(f"{x.shape[-2]} feature rows for {adj.shape[0]} nodes")
        self._adj = adj
        self._agg = kernels.aggregate(adj, x)
        self._z = self._agg @ self.params["W"].T
        return _act(self.activation, self._z)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dz = _act_grad(self.activation, self._z, dy)
        self.grads["W"] += dz.reshape(-1, self.n_out).T @ self._agg.reshape(-1, self.n_in)
        return kernels.aggregate(self._adj.T, dz @ self.params["W"])


def gcn_forward(layer: GraphConv, node_features: np.ndarray, edges) -> np.ndarray:
    adj = normalized_adjacency(node_features.shape[-2], edges)
    return layer.forward(node_features, adj)


class MLP:
    def __init__(self, sizes, rng, out_activation: str = "linear"):
        self.layers = [Dense(a, b, "relu" if i < len(sizes) - 2 else out_activation, rng)
                       for i, (a, b) in enumerate(zip(sizes, sizes[1:]))]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for k in layer.params:
                yield f"{i}.{k}", layer, k


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def td_loss(q_taken: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared TD error over the batch and its gradient w.r.t. q_taken."""
    return mse(q_taken, targets)


class Adam:
    def __init__(self, named_params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.entries = list(named_params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(layer.params[k]) for _, layer, k in self.entries]
        self.v = [np.zeros_like(layer.params[k]) for _, layer, k in self.entries]
        self.t = 0

    def zero_grad(self):
        for _, layer, k in self.entries:
            layer.grads[k].fill(0.0)

    def step(self):
        for _, layer, k in self.entries:
            if not np.all(np.isfinite(layer.grads[k])):
                raise TrainingDiverged("non-finite gradient")
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for (_, layer, k), m, v in zip(self.entries, self.m, self.v):
            g = layer.grads[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            layer.params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def sgd_step(named_params, lr: float):
    for _, layer, k in named_params:
        layer.params[k] -= lr * layer.grads[k]


def save_params(path, named_params, meta: dict | None = None):
    arrays = {name: layer.params[k] for name, layer, k in named_params}
    header = {"format": "ranmaze-params", "version": CHECKPOINT_VERSION,
              "shapes": {n: list(a.shape) for n, a in arrays.items()}}
    header.update(meta or {})
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(header, sort_keys=True)), **arrays)


def read_params(path) -> tuple[dict, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != "ranmaze-params" or meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint format")
        arrays = {k: data[k].copy() for k in data.files if k != "__meta__"}
    return arrays, meta


def load_params(path, named_params) -> dict:
    arrays, meta = read_params(path)
    for name, layer, k in named_params:
        if name not in arrays:
            raise ShapeError(f"{path}: missing parameter {name}")
        if arrays[name].shape != layer.params[k].shape:
            raise ShapeError(f"{path}: {name} has shape {arrays[name].shape}")
        layer.params[k][...] = arrays[name]
    return meta


def params_digest(path) -> str:
    """Hash of a checkpoint's metadata and arrays (npz zip timestamps are ignored)."""
    arrays, meta = read_params(path)
    h = hashlib.sha256(json.dumps(meta, sort_keys=True).encode())
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        h.update(name.encode())
        h.update(str(a.dtype).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]

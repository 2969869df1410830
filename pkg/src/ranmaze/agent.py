"""DQN over codec outputs, shared across sub-networks."""
from __future__ import annotations

import copy
import pickle
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .codec import CODE_SIZE, Codec, FeatureSpec, GraphBuilder
from .env import MazeEnv, n_actions
from .netmodel import Deployment, SubNetwork, sample_requests
from .nn import MLP, Adam, TrainingDiverged, load_params, read_params, save_params, td_loss
from .power import PowerCurve

AGENT_SCHEMA = 1
LOG_COLUMNS = ("episode", "subnet_id", "t", "episode_power_kw", "smoothed_reward", "epsilon",
               "wall_ms")


@dataclass
class AgentConfig:
    batch_size: int = 50
    lr: float = 2e-4
    tau: float = 0.1           # target update coefficient
    gamma: float = 0.99
    hidden: tuple = (128, 128)
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.6
    replay_capacity: int = 50_000
    warmup: int = 500
    updates_per_step: int = 1
    target_every: int = 1      # optimizer steps between soft target updates
    mask_invalid: bool = True  # act only on real moves, never the no-op
    smoothing: int = 100       # episodes in the reward moving average
    patience: int = 0          # episodes at the failure floor before aborting; 0 disables
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must be in [0, 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must be in (0, 1]")
        self.hidden = tuple(self.hidden)

    def epsilon(self, episode: int, total: int) -> float:
        span = max(1, int(total * self.eps_decay_fraction))
        frac = min(1.0, episode / span)
        return self.eps_start + (self.eps_end - self.eps_start) * frac


class QNetwork(MLP):
    def __init__(self, n_out: int, hidden=(128, 128), rng=None, n_in: int = CODE_SIZE):
        rng = rng if rng is not None else np.random.default_rng(0)
        super().__init__([n_in, *hidden, n_out], rng)
        self.n_in, self.n_out = n_in, n_out
        self.masked = False   # restrict greedy choices to the node's real moves
        assert self.layers[0].n_in == CODE_SIZE or n_in != CODE_SIZE
        assert self.layers[-1].n_out == n_out


class ReplayBuffer:
    """Fixed-capacity FIFO store of transitions."""

    def __init__(self, capacity: int, code_size: int = CODE_SIZE, n_actions: int | None = None):
        self.capacity = capacity
        # valid-action masks of next states, kept only when the agent masks
        self.next_valid = None if n_actions is None else np.ones((capacity, n_actions), dtype=bool)
        self.codes = np.zeros((capacity, code_size))
        self.next_codes = np.zeros((capacity, code_size))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.subnets = np.zeros(capacity, dtype=np.int64)
        self.size = 0
        self.head = 0   # next write slot; also the oldest entry once full

    def __len__(self):
        return self.size

    def add(self, code, action, reward, next_code, done, subnet_id=0, next_valid=None):
        i = self.head
        if self.next_valid is not None:
            self.next_valid[i] = True if next_valid is None else next_valid
        self.codes[i] = code
        self.next_codes[i] = next_code
        self.actions[i] = action
        self.rewards[i] = reward
        self.dones[i] = done
        self.subnets[i] = subnet_id
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng):
        idx = rng.integers(self.size, size=batch_size)
        batch = (self.codes[idx], self.actions[idx], self.rewards[idx], self.next_codes[idx],
                 self.dones[idx])
        if self.next_valid is not None:
            batch += (self.next_valid[idx],)
        return batch

    def ordered(self):
        """Stored actions oldest first (for checking FIFO order)."""
        if self.size < self.capacity:
            return self.actions[:self.size].copy()
        return np.concatenate([self.actions[self.head:], self.actions[:self.head]])


def useful_actions(env: MazeEnv) -> list[int]:
    """Moves the current node really has, minus the stay-without-placing no-op.

    The no-op only burns a step toward the cap, so dropping it loses no outcome.
    """
    return env.valid_actions()[1:]


def select_action(qnet: QNetwork, code: np.ndarray, epsilon: float, rng,
                  valid=None) -> int:
    """Epsilon-greedy choice; ``valid`` (action indices) restricts both branches."""
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must be in [0, 1]")
    if epsilon > 0 and rng.random() < epsilon:
        if valid is None:
            return int(rng.integers(qnet.n_out))
        return int(valid[rng.integers(len(valid))])
    q = qnet.forward(code[None])[0]
    if valid is None:
        return int(np.argmax(q))
    valid = np.asarray(valid)
    return int(valid[np.argmax(q[valid])])


def td_targets(target_net: QNetwork, rewards, next_codes, dones, gamma: float,
               next_valid=None) -> np.ndarray:
    q = target_net.forward(next_codes)
    if next_valid is not None:
        q = np.where(next_valid, q, -np.inf)
    next_max = q.max(axis=1)
    return rewards + gamma * np.where(dones, 0.0, next_max)


def td_update(qnet: QNetwork, target_net: QNetwork, batch, gamma: float, opt: Adam) -> float:
    codes, actions, rewards, next_codes, dones = batch[:5]
    targets = td_targets(target_net, rewards, next_codes, dones, gamma,
                         batch[5] if len(batch) > 5 else None)
    opt.zero_grad()
    q = qnet.forward(codes)
    rows = np.arange(len(actions))
    loss, grad = td_loss(q[rows, actions], targets)
    if not np.isfinite(loss):
        raise TrainingDiverged(f"TD loss became {loss}")
    dq = np.zeros_like(q)
    dq[rows, actions] = grad
    qnet.backward(dq)
    opt.step()
    return loss


def soft_update(target_net: QNetwork, qnet: QNetwork, tau: float):
    for (_, tl, k), (_, ol, k2) in zip(target_net.named_params(), qnet.named_params()):
        if tl.params[k].shape != ol.params[k2].shape:
            raise ValueError("target and online networks differ in shape")
        tl.params[k] *= 1 - tau
        tl.params[k] += tau * ol.params[k2]


def save_qnet(path, qnet: QNetwork, meta: dict | None = None):
    save_params(path, qnet.named_params(), dict({"kind": "qnet", "schema": AGENT_SCHEMA,
                                                 "n_out": qnet.n_out, "masked": qnet.masked,
                                                 "hidden": [l.n_out for l in qnet.layers[:-1]]},
                                                **(meta or {})))


def load_qnet(path) -> QNetwork:
    _, meta = read_params(path)
    if meta.get("kind") != "qnet":
        raise ValueError(f"{path}: not a Q-network checkpoint")
    q = QNetwork(meta["n_out"], tuple(meta["hidden"]))
    load_params(path, q.named_params())
    q.masked = bool(meta.get("masked", False))
    return q


class Subnet:
    """Per-sub-network runtime pieces: environment, graph builder, frozen codec."""

    def __init__(self, net: SubNetwork, codec: Codec, dep: Deployment, spec: FeatureSpec,
                 request_ranges: dict | None = None):
        power = dep.power
        self.net, self.codec = net, codec
        self.env = MazeEnv(net, spec.max_degree, dep.epsilon,
                           PowerCurve(power["idle_kw"], power["max_kw"]), power["switch_kw"])
        self.builder = GraphBuilder(net, spec, self.env.step_cap)
        self.ranges = request_ranges or dep.request_ranges
        self.max_requests = dep.max_requests

    def encode(self, state) -> np.ndarray:
        if state.terminal:
            return np.zeros(self.codec.code)
        return self.codec.encode_batch(self.builder.node_matrix(state)[None])[0]

    def sample(self, rng):
        return sample_requests(self.net, rng, self.ranges, self.max_requests)


def run_policy(sub: Subnet, qnet: QNetwork, requests) -> tuple[MazeEnv, float]:
    """Greedy rollout of one episode; returns the finished env and the episode return."""
    env = sub.env
    state = env.reset(requests)
    total = 0.0
    guard = 0
    while not state.terminal:
        valid = useful_actions(env) if qnet.masked else None
        a = select_action(qnet, sub.encode(state), 0.0, None, valid)
        out = env.step(a)
        total += out.reward
        state = out.next_state
        guard += 1
        if guard > 10_000:
            raise RuntimeError("episode did not terminate")
    return env, total


@dataclass
class TrainingRun:
    config: AgentConfig
    episodes: int
    seed: int
    qnet: QNetwork
    target: QNetwork
    opt: Adam
    buffer: ReplayBuffer
    rngs: dict
    episode: int = 0
    env_steps: int = 0
    updates: int = 0
    returns: list = field(default_factory=list)
    log: list = field(default_factory=list)
    trackers: dict = field(default_factory=dict)


def new_run(n_out: int, episodes: int, config: AgentConfig, seed: int) -> TrainingRun:
    root = np.random.SeedSequence(seed)
    init, explore, replay, sampling = (np.random.default_rng(s) for s in root.spawn(4))
    qnet = QNetwork(n_out, config.hidden, init)
    qnet.masked = config.mask_invalid
    target = copy.deepcopy(qnet)
    return TrainingRun(config, episodes, seed, qnet, target, Adam(qnet.named_params(), config.lr),
                       ReplayBuffer(config.replay_capacity,
                                    n_actions=n_out if config.mask_invalid else None), {
                           "explore": explore, "replay": replay, "sampling": sampling})


def save_run(path, run: TrainingRun, subs: list[Subnet]):
    run.trackers = {s.net.id: list(s.env.tracker.window) for s in subs}
    with open(path, "wb") as fh:
        pickle.dump(run, fh)


def load_run(path, subs: list[Subnet]) -> TrainingRun:
    with open(path, "rb") as fh:
        run = pickle.load(fh)
    # the optimiser holds references to the pickled layers; keep them consistent
    run.opt.entries = list(run.qnet.named_params())
    for s in subs:
        s.env.tracker.window.clear()
        s.env.tracker.window.extend(run.trackers.get(s.net.id, []))
    return run


def train(subs: list[Subnet], episodes: int, config: AgentConfig | None = None, seed: int = 0,
          run: TrainingRun | None = None, checkpoint_path=None, wall_time: bool = False,
          stop_after: int | None = None) -> TrainingRun:
    """Train one Q-network on episodes drawn round-robin from ``subs``.

    All transitions share one replay buffer. With ``mask_invalid`` the agent
    only chooses among :func:`useful_actions`; the environment still treats
    padded moves as failures if they are ever taken. Each log row is
    ``(episode, subnet_id, t, episode_power_kw, smoothed_reward, epsilon, wall_ms)``;
    ``wall_ms`` is None unless ``wall_time`` is set, which keeps logs
    reproducible byte for byte. ``stop_after`` ends the call early (used to
    exercise resuming from a checkpoint).
    """
    config = config or AgentConfig()
    widths = {s.env.n_actions for s in subs}
    if len(widths) != 1:
        raise ValueError("sub-networks disagree on the padded action space")
    if run is None:
        run = new_run(widths.pop(), episodes, config, seed)
        for s in subs:
            s.env.tracker.window.clear()
    cfg = run.config
    if run.qnet.n_in != CODE_SIZE or run.qnet.n_out != subs[0].env.n_actions:
        raise ValueError("Q-network shape does not match codes/actions")
    explore, replay, sampling = run.rngs["explore"], run.rngs["replay"], run.rngs["sampling"]
    floor_streak = 0
    t_start = time.perf_counter()
    while run.episode < run.episodes:
        if stop_after is not None and run.episode >= stop_after:
            break
        sub = subs[run.episode % len(subs)]
        eps = cfg.epsilon(run.episode, run.episodes)
        state = sub.env.reset(sub.sample(sampling))
        code = sub.encode(state)
        ep_return = 0.0
        while not state.terminal:
            valid = useful_actions(sub.env) if cfg.mask_invalid else None
            a = select_action(run.qnet, code, eps, explore, valid)
            out = sub.env.step(a)
            next_code = sub.encode(out.next_state)
            next_valid = None
            if cfg.mask_invalid and not out.terminal:
                next_valid = np.zeros(run.qnet.n_out, dtype=bool)
                next_valid[useful_actions(sub.env)] = True
            run.buffer.add(code, a, out.reward, next_code, out.terminal, sub.net.id, next_valid)
            run.env_steps += 1
            ep_return += out.reward
            if len(run.buffer) >= cfg.warmup:
                for _ in range(cfg.updates_per_step):
                    td_update(run.qnet, run.target, run.buffer.sample(cfg.batch_size, replay),
                              cfg.gamma, run.opt)
                    run.updates += 1
                    if run.updates % cfg.target_every == 0:
                        soft_update(run.target, run.qnet, cfg.tau)
            state, code = out.next_state, next_code
        run.returns.append(ep_return)
        window = run.returns[-cfg.smoothing:]
        smoothed = float(np.mean(window))
        wall = round((time.perf_counter() - t_start) * 1000) if wall_time else None
        run.log.append((run.episode, sub.net.id, sub.env.last_t, round(sub.env.last_power, 6),
                        round(smoothed, 6), round(eps, 6), wall, run.env_steps))
        run.episode += 1
        if cfg.patience:
            floor_streak = floor_streak + 1 if smoothed <= -0.5 else 0
            if floor_streak > cfg.patience:
                raise TrainingDiverged("smoothed reward stuck at the failure floor")
        if checkpoint_path and cfg.checkpoint_every and run.episode % cfg.checkpoint_every == 0:
            save_run(checkpoint_path, run, subs)
    return run


def write_log(path, run: TrainingRun):
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS + ("env_steps",))
        for row in run.log:
            w.writerow(["" if v is None else v for v in row])


def plateau(values, fraction: float = 0.2) -> float:
    """Mean of the last ``fraction`` of a smoothed-reward series."""
    values = list(values)
    k = max(1, int(len(values) * fraction))
    return float(np.mean(values[-k:]))


def steps_to_reach(log, target: float, tolerance: float = 0.05):
    """Env steps at the first episode whose smoothed reward is within tolerance of target."""
    bar = target - tolerance * abs(target)
    for row in log:
        if row[4] >= bar:
            return row[7]
    return None


def config_dict(cfg: AgentConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d

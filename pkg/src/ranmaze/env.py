"""Maze-walk MDP for placing one episode's requests on a sub-network.

The agent walks the MEC graph. Each step picks an out-edge slot (0 = stay)
and whether to place the next chain function on the node it lands on.
The composite action index is ``move * 2 + place``; the move range is padded
to the deployment-wide maximum out-degree so every sub-network shares one
action space.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .constraints import (CU_CP, DU, UPF, Placement, check_du_capability,
                          check_end_to_end, check_fronthaul, check_midhaul,
                          feasible, stage_mgbps)
from .netmodel import InsufficientResource, Request, ResourceLedger, SubNetwork
from .power import PowerCurve, ReferenceUnavailable, UMinTracker, episode_power, objective_ratio

FAIL_REWARD = -0.2
MOVE_REWARD = 0.0
PLACE_REWARD = 0.2
SUCCESS_REWARD = 0.4
STEP_REWARDS = (FAIL_REWARD, MOVE_REWARD, PLACE_REWARD, SUCCESS_REWARD)
TRACE_VERSION = 1
DONE = 4  # chain progress after the UPF is placed


class ActionOutOfRange(IndexError):
    pass


class EpisodeOver(RuntimeError):
    pass


class Action(NamedTuple):
    move: int
    place: int

    @property
    def index(self) -> int:
        return self.move * 2 + self.place

    @classmethod
    def from_index(cls, index: int) -> "Action":
        return cls(*divmod(int(index), 2))


def n_actions(max_degree: int) -> int:
    return 2 * (max_degree + 1)


@dataclass(frozen=True)
class EnvState:
    compute: np.ndarray
    bandwidth: np.ndarray
    position: int
    request_index: int
    chain_progress: int
    route: tuple
    place_at: tuple
    steps_in_request: int
    k: int
    terminal: bool
    successes: int
    request: Request | None = None

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.compute.tobytes())
        h.update(self.bandwidth.tobytes())
        h.update(repr((self.position, self.request_index, self.chain_progress, self.route,
                       self.place_at, self.steps_in_request, self.k, self.terminal,
                       self.successes, self.request)).encode())
        return h.hexdigest()


class StepOutcome(NamedTuple):
    next_state: EnvState
    reward: float
    terminal: bool
    info: dict


def success_ratio(successes: int, total: int) -> float:
    """Served requests over all requests; an empty episode counts as fully served."""
    if total == 0:
        return 1.0
    return successes / total


def episode_end_reward(t: float, tracker: UMinTracker, power: float) -> float:
    if t < 0.5:
        return -0.5
    if t < 1:
        return t
    try:
        return objective_ratio(tracker, power) + 1.0
    except (ReferenceUnavailable, ValueError):
        # no reference yet (or nothing placed): keep only the success bonus
        return 1.0


@dataclass
class EpisodeLog:
    successes: int = 0
    failures: list = field(default_factory=list)
    placements: list = field(default_factory=list)


class MazeEnv:
    def __init__(self, net: SubNetwork, max_degree: int | None = None, epsilon: float = 0.2,
                 curve: PowerCurve | None = None, switch_kw: float = 30.0,
                 tracker: UMinTracker | None = None, step_cap_factor: int = 4):
        self.net = net
        self.max_degree = net.max_out_degree if max_degree is None else max_degree
        if self.max_degree < net.max_out_degree:
            raise ValueError("padded degree below the sub-network's own maximum")
        self.n_actions = n_actions(self.max_degree)
        self.epsilon = epsilon
        self.curve = curve or PowerCurve()
        self.switch_kw = switch_kw
        self.tracker = tracker if tracker is not None else UMinTracker()
        self.step_cap = step_cap_factor * net.n_nodes
        self.requests: list[Request] = []
        self.terminal = True

    # -- episode control --------------------------------------------------

    def reset(self, requests: list[Request]) -> EnvState:
        self.requests = list(requests)
        self.ledger = ResourceLedger.full(self.net)
        self.k = 0
        self.log = EpisodeLog()
        self.req_index = -1
        self.terminal = False
        self.last_power = 0.0
        self.last_t = None
        self._next_request()
        if not self.requests:
            self._finish()
        return self.state

    def _next_request(self):
        self.req_index += 1
        if self.req_index >= len(self.requests):
            self.record = None
            return False
        req = self.requests[self.req_index]
        self.record = Placement(req)
        self.position = req.entrance
        self.steps_in_request = 0
        self.checkpoint = self.ledger.copy()
        return True

    def _finish(self) -> float:
        self.terminal = True
        t = success_ratio(self.log.successes, len(self.requests))
        power = episode_power(self.log.placements, self.net, self.curve, self.switch_kw)
        g = episode_end_reward(t, self.tracker, power)
        self.tracker.record_if_full_success(t, power)
        self.last_power = power
        self.last_t = t
        return g

    @property
    def current_request(self) -> Request | None:
        return self.record.request if self.record is not None else None

    @property
    def chain_progress(self) -> int:
        return DONE if self.record is None else len(self.record.place_at)

    @property
    def state(self) -> EnvState:
        rec = self.record
        return EnvState(
            self.ledger.compute.copy(), self.ledger.bandwidth.copy(),
            int(self.position) if rec is not None else -1,
            self.req_index, self.chain_progress,
            tuple(rec.route) if rec else (), tuple(rec.place_at) if rec else (),
            self.steps_in_request if rec else 0, self.k, self.terminal, self.log.successes,
            rec.request if rec else None)

    # -- transitions ------------------------------------------------------

    def _fail(self, cause: str) -> tuple[float, dict]:
        self.ledger.restore(self.checkpoint)
        self.log.failures.append((self.req_index, cause))
        info = {"event": "fail", "cause": cause, "request": self.req_index}
        return FAIL_REWARD, info

    def _place(self) -> str | None:
        """Place the next function at the current position; returns a failure cause."""
        rec = self.record
        stage = len(rec.place_at)
        rec.place_at.append(len(rec.route) - 1)
        if stage == DU:
            if not check_fronthaul(rec, self.net).ok:
                return "C1"
        elif stage == CU_CP:
            if not check_midhaul(rec, self.net).ok:
                return "C2"
        elif stage == UPF:
            if not check_end_to_end(rec, self.net).ok:
                return "C3"
        try:
            self.ledger.reserve_node(self.position, rec.request.cores[stage])
        except InsufficientResource:
            return "C4"
        if stage == DU and not check_du_capability(rec, self.net).ok:
            return "DU"
        return None

    def step(self, action) -> StepOutcome:
        if self.terminal:
            raise EpisodeOver("step on a finished episode")
        index = action.index if isinstance(action, Action) else int(action)
        if not 0 <= index < self.n_actions:
            raise ActionOutOfRange(f"action {index} outside [0, {self.n_actions})")
        move, place = divmod(index, 2)
        self.k += 1
        self.steps_in_request += 1
        rec = self.record
        req = rec.request
        reward, info, done_request = MOVE_REWARD, {"event": "move"}, False

        cause = None
        if move > 0:
            arcs = self.net.out_arcs[self.position]
            if move > len(arcs):
                cause = "invalid-move"
            else:
                arc = arcs[move - 1]
                try:
                    self.ledger.reserve_link(int(self.net.arc_link[arc]),
                                             stage_mgbps(req, len(rec.place_at), self.epsilon))
                except InsufficientResource:
                    cause = "C5"
                else:
                    self.position = self.net.arcs[arc][1]
                    rec.route.append(self.position)
        if cause is None and place:
            cause = self._place()
            if cause is None:
                if rec.complete:
                    reward, info, done_request = SUCCESS_REWARD, {"event": "success",
                                                                  "request": self.req_index}, True
                else:
                    reward, info = PLACE_REWARD, {"event": "place",
                                                  "function": len(rec.place_at) - 1}
        if cause is None and not done_request and self.steps_in_request >= self.step_cap:
            cause = "step-cap"
        if cause is not None:
            reward, info = self._fail(cause)
            done_request = True
        elif done_request:
            self.log.successes += 1
            self.log.placements.append(rec)

        if done_request and not self._next_request():
            reward = self._finish()
            info = dict(info, episode_end=True, t=self.last_t, power_kw=self.last_power)
        return StepOutcome(self.state, reward, self.terminal, info)

    # -- helpers -----------------------------------------------------------

    def valid_actions(self) -> list[int]:
        deg = len(self.net.out_arcs[self.position])
        return list(range(2 * (deg + 1)))

    def verify_log(self) -> bool:
        """Cross-check every served record with the constraint engine."""
        ledger = ResourceLedger.full(self.net)
        from .constraints import commit
        for rec in self.log.placements:
            if not feasible(rec, ledger, self.net, self.epsilon).ok:
                return False
            commit(ledger, rec, self.net, self.epsilon)
        return ledger == self.ledger


class TraceWriter:
    """Line-delimited JSON episode trace."""

    def __init__(self, fh):
        self.fh = fh
        fh.write(json.dumps({"trace_version": TRACE_VERSION}) + "\n")

    def write(self, k: int, state: EnvState, action: int, reward: float, info: dict):
        row = {"k": k, "digest": state.digest(), "action": int(action),
               "reward": float(reward), "info": _jsonable(info)}
        self.fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_trace(fh) -> list[dict]:
    lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("trace_version") != TRACE_VERSION:
        raise ValueError("unsupported trace version")
    return lines[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj

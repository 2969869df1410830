"""Node power curves, episode power and the sliding minimum-power reference."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

WINDOW = 20


class CapacityViolation(ValueError):
    pass


class ReferenceUnavailable(RuntimeError):
    """No full-success episode has been recorded yet."""


@dataclass(frozen=True)
class PowerCurve:
    """Power draw of a MEC node as a function of utilisation.

    ``shape`` maps utilisation in (0, 1] to a fraction in [0, 1] of the
    idle-to-max span; it must be monotone non-decreasing with shape(1) == 1.
    The default is linear.
    """
    idle_kw: float = 150.0
    max_kw: float = 350.0
    shape: Callable[[float], float] | None = None

    def __call__(self, utilisation: float) -> float:
        if utilisation <= 0:
            return 0.0
        frac = utilisation if self.shape is None else self.shape(utilisation)
        return self.idle_kw + (self.max_kw - self.idle_kw) * frac

    def table(self, capacity: int) -> np.ndarray:
        """Power for every integer load 0..capacity on a node of that size."""
        return np.array([self(load / capacity) for load in range(capacity + 1)])

    def min_increment(self, capacity: int, extra: int) -> float:
        """Smallest power increase from adding ``extra`` cores at any existing load."""
        if extra <= 0:
            return 0.0
        tab = self.table(capacity)
        return float(np.min(tab[extra:] - tab[:capacity + 1 - extra]))


def node_power(curve: PowerCurve, placed_cores: int, capacity: int) -> float:
    if placed_cores < 0:
        raise ValueError("negative load")
    if placed_cores > capacity:
        raise CapacityViolation(f"{placed_cores} cores placed on a {capacity}-core node")
    return curve(placed_cores / capacity)


def node_loads(placements: Iterable, n_nodes: int) -> np.ndarray:
    loads = np.zeros(n_nodes, dtype=np.int64)
    for p in placements:
        for v, host in enumerate(p.hosts):
            loads[host] += p.request.cores[v]
    return loads


def episode_power(placements, net, curve: PowerCurve, switch_kw: float) -> float:
    """Total node power plus switching power over every served request's route."""
    placements = list(placements)
    loads = node_loads(placements, net.n_nodes)
    total = sum(node_power(curve, int(loads[n]), int(net.capacity[n]))
                for n in range(net.n_nodes))
    hops = sum(p.hops for p in placements)
    return total + hops * switch_kw


class UMinTracker:
    """Minimum episode power over the last ``window`` full-success episodes."""

    def __init__(self, window: int = WINDOW):
        self.window = deque(maxlen=window)

    @property
    def current_min(self) -> float | None:
        return min(self.window) if self.window else None

    def record_if_full_success(self, t: float, power: float) -> "UMinTracker":
        if not 0 <= t <= 1:
            raise ValueError(f"success ratio {t} outside [0, 1]")
        # zero-power episodes carry no information about the reference
        if t == 1 and power > 0:
            self.window.append(float(power))
        return self

    def __len__(self):
        return len(self.window)


def objective_ratio(tracker: UMinTracker, power: float) -> float:
    if power <= 0:
        raise ValueError("episode power must be positive")
    ref = tracker.current_min
    if ref is None:
        raise ReferenceUnavailable("no full-success episode recorded")
    return ref / power

"""Side-by-side evaluation of placement strategies on shared request draws."""
from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .baselines import InstanceTooLarge, exhaustive_optimum, greedy_place, random_place
from .netmodel import Deployment, sample_requests
from .power import PowerCurve

STRATEGIES = ("agent", "random", "greedy", "oracle")
METRIC_COLUMNS = ("strategy", "subnet_id", "episodes", "t_mean", "t_ci_low", "t_ci_high",
                  "power_mean_kw", "power_std_kw", "power_saving_vs_random_pct", "notes")


@dataclass
class EpisodeResult:
    subnet_id: int
    episode: int
    n_requests: int
    t: float | None        # None when the strategy refused the instance
    power_kw: float | None
    note: str = ""


@dataclass
class Evaluation:
    episodes: dict = field(default_factory=dict)   # strategy -> list[EpisodeResult]
    rows: list = field(default_factory=list)


def bootstrap_ci(values, n_boot: int = 2000, level: float = 0.95, batch: int = 5,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap of the mean over consecutive batches of ``batch`` values."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return float("nan"), float("nan")
    n_batches = max(1, len(values) // batch)
    means = np.array([b.mean() for b in np.array_split(values, n_batches)])
    rng = np.random.default_rng(seed)
    draws = rng.integers(len(means), size=(n_boot, len(means)))
    boot = means[draws].mean(axis=1)
    lo, hi = np.percentile(boot, [50 * (1 - level), 50 * (1 + level)])
    return float(lo), float(hi)


def request_draws(dep: Deployment, episodes: int, seed: int, ranges: dict | None = None):
    """Per sub-network, the request lists every strategy is evaluated on."""
    root = np.random.SeedSequence(seed)
    streams = root.spawn(len(dep.subnets))
    out = {}
    for net, ss in zip(dep.subnets, streams):
        rng = np.random.default_rng(ss)
        out[net.id] = [sample_requests(net, rng, ranges or dep.request_ranges, dep.max_requests)
                       for _ in range(episodes)]
    return out


def run_strategy(name: str, dep: Deployment, draws: dict, seed: int, agent=None,
                 ranges: dict | None = None) -> list[EpisodeResult]:
    """Play ``name`` on every drawn episode. ``agent`` is ``(subs, qnet)`` for the agent."""
    power = dep.power
    curve = PowerCurve(power["idle_kw"], power["max_kw"])
    sw = power["switch_kw"]
    results = []
    for net in dep.subnets:
        rng = np.random.default_rng(np.random.SeedSequence([seed, net.id, 1]))
        for e, reqs in enumerate(draws[net.id]):
            n = len(reqs)
            if name == "agent":
                from .agent import run_policy
                subs, qnet = agent
                env, _ = run_policy(subs[net.id], qnet, reqs)
                results.append(EpisodeResult(net.id, e, n, env.last_t, env.last_power))
            elif name == "random":
                r = random_place(net, reqs, rng, dep.epsilon, curve, sw)
                results.append(EpisodeResult(net.id, e, n, r.t, r.power_kw))
            elif name == "greedy":
                r = greedy_place(net, reqs, dep.epsilon, curve, sw)
                results.append(EpisodeResult(net.id, e, n, r.t, r.power_kw))
            elif name == "oracle":
                try:
                    r = exhaustive_optimum(net, reqs, dep.epsilon, curve, sw)
                except InstanceTooLarge as exc:
                    results.append(EpisodeResult(net.id, e, n, None, None, f"size guard: {exc}"))
                    continue
                results.append(EpisodeResult(net.id, e, n, r.t, r.power_kw, r.note))
            else:
                raise ValueError(f"unknown strategy {name!r}")
    return results


def _summary(strategy, subnet_id, eps: list[EpisodeResult], requested: int, seed: int):
    scored = [e for e in eps if e.t is not None]
    notes = []
    refused = len(eps) - len(scored)
    if refused:
        notes.append(f"size guard refused {refused} episodes")
    if not scored:
        return [strategy, subnet_id, 0, "", "", "", "", "", "", "; ".join(notes)]
    t = np.array([e.t for e in scored])
    lo, hi = bootstrap_ci(t, seed=seed)
    # power per request over fully served, non-empty episodes
    per_req = np.array([e.power_kw / e.n_requests for e in scored
                        if e.t == 1 and e.n_requests > 0])
    if strategy == "oracle":
        infeasible = sum(1 for e in scored if e.note == "no feasible solution")
        if infeasible:
            notes.append(f"no feasible solution in {infeasible} episodes")
    if len(per_req) < requested:
        notes.append(f"t=1 episodes {len(per_req)} of {requested}")
    mean = float(per_req.mean()) if len(per_req) else float("nan")
    std = float(per_req.std()) if len(per_req) else float("nan")
    return [strategy, subnet_id, len(scored), float(t.mean()), lo, hi, mean, std, None,
            "; ".join(notes)]


def summarise(results: dict, dep: Deployment, requested: int, seed: int = 0) -> list:
    """One metric row per strategy and sub-network, plus an ``all`` row per strategy."""
    rows = []
    for name, eps in results.items():
        for net in dep.subnets:
            mine = [e for e in eps if e.subnet_id == net.id]
            rows.append(_summary(name, net.id, mine, requested, seed))
        rows.append(_summary(name, "all", eps, requested * len(dep.subnets), seed))
    base = {(r[1]): r[6] for r in rows if r[0] == "random"}
    for r in rows:
        ref = base.get(r[1])
        if ref not in (None, "") and r[6] not in (None, "") and np.isfinite(ref) \
                and np.isfinite(r[6]) and ref > 0:
            r[8] = 100.0 * (ref - r[6]) / ref
        else:
            r[8] = ""
    return rows


def evaluate(dep: Deployment, strategies, episodes: int, seed: int, agent=None,
             ranges: dict | None = None) -> Evaluation:
    draws = request_draws(dep, episodes, seed, ranges)
    ev = Evaluation()
    for name in strategies:
        if name == "agent" and agent is None:
            raise ValueError("the agent strategy needs trained codecs and a Q-network")
        ev.episodes[name] = run_strategy(name, dep, draws, seed, agent, ranges)
    ev.rows = summarise(ev.episodes, dep, episodes, seed)
    return ev


def _fmt(v):
    if v is None or v == "":
        return ""
    if isinstance(v, float):
        return "nan" if not np.isfinite(v) else f"{v:.6f}"
    return str(v)


def metrics_csv(rows, provenance: dict) -> str:
    """CSV text with ``# key: value`` provenance lines ahead of the header."""
    buf = io.StringIO()
    for k in sorted(provenance):
        buf.write(f"# {k}: {provenance[k]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()[:16]

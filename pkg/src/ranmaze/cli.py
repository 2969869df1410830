"""Command-line harness: codec training, DQN training, evaluation, oracle runs.

Every verb reads one YAML config (the topology plus optional ``codec``,
``agent`` and ``evaluation`` sections) and writes CSVs under ``--out``.
CSV provenance lines record the config digest, the seed and the digests of
the checkpoints used, so reruns can be compared byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .agent import (AgentConfig, Subnet, load_qnet, load_run, plateau, save_qnet,
                    save_run, steps_to_reach, train, write_log)
from .baselines import InstanceTooLarge, exhaustive_optimum
from .codec import Codec, CodecConfig, FeatureSpec, collect_states, train_codec
from .evaluate import STRATEGIES, evaluate, metrics_csv, request_draws
from .netmodel import ConfigError, load_topology, scale_ranges
from .nn import params_digest
from .power import PowerCurve

PRESETS = ("option7_2", "option6")


class UsageError(Exception):
    pass


def _dataclass_from(cls, doc: dict | None, where: str):
    doc = dict(doc or {})
    known = {f.name for f in fields(cls)}
    extra = set(doc) - known
    if extra:
        raise UsageError(f"unknown {where} setting(s): {', '.join(sorted(extra))}")
    return cls(**doc)


class Context:
    def __init__(self, args):
        if args.config is None:
            raise UsageError("--config is required")
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        text = path.read_bytes()
        self.config_digest = hashlib.sha256(text).hexdigest()[:16]
        try:
            self.dep = load_topology(path)
        except ConfigError as exc:
            raise UsageError(f"invalid config: {exc}") from exc
        doc = self.dep.raw
        self.codec_cfg = _dataclass_from(CodecConfig, doc.get("codec"), "codec")
        self.agent_cfg = _dataclass_from(AgentConfig, doc.get("agent"), "agent")
        self.eval_doc = dict(doc.get("evaluation") or {})
        self.seed = args.seed if args.seed is not None else self.dep.seed
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.episodes = args.episodes
        self.spec = FeatureSpec.from_deployment(self.dep)

    def provenance(self, **extra) -> dict:
        return dict({"ranmaze": __version__, "config_sha256": self.config_digest,
                     "seed": self.seed}, **extra)

    def codec_path(self, directory, net_id) -> Path:
        return Path(directory) / f"codec_subnet{net_id}.npz"

    def load_subnets(self, codec_dir, ranges=None) -> tuple[list[Subnet], dict]:
        subs, digests = [], {}
        for net in self.dep.subnets:
            p = self.codec_path(codec_dir, net.id)
            if not p.is_file():
                raise UsageError(f"missing codec {p}; run train-codec first")
            subs.append(Subnet(net, Codec.load(p, net), self.dep, self.spec, ranges))
            digests[f"codec{net.id}"] = params_digest(p)
        return subs, digests


def write_rows(path, header, rows, provenance=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k in sorted(provenance or {}):
            fh.write(f"# {k}: {provenance[k]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def cmd_train_codec(ctx: Context, args) -> int:
    for net in ctx.dep.subnets:
        states = collect_states(net, ctx.dep, ctx.spec, ctx.codec_cfg.n_states,
                                seed=ctx.seed * 1000 + net.id)
        codec, history = train_codec(states, net, ctx.codec_cfg, seed=ctx.seed)
        path = ctx.codec_path(ctx.out, net.id)
        codec.save(path)
        write_rows(ctx.out / f"codec_loss_subnet{net.id}.csv",
                   ("epoch", "train_loss", "val_loss"),
                   [(e, f"{a:.8f}", f"{b:.8f}") for e, a, b in history],
                   ctx.provenance(subnet_id=net.id, checkpoint=params_digest(path)))
        print(f"subnet {net.id}: {len(history)} epochs, val MSE {min(h[2] for h in history):.5f}"
              f" -> {path}")
    return 0


def _train_one(ctx, subs, tag, episodes, resume, wall_time):
    ckpt = ctx.out / f"run_{tag}.pkl"
    run = None
    if resume and ckpt.is_file():
        run = load_run(ckpt, subs)
        # an explicit --episodes extends (or trims) the resumed run's target
        if ctx.episodes is not None:
            run.episodes = episodes
        print(f"{tag}: resuming at episode {run.episode}")
    run = train(subs, episodes, ctx.agent_cfg, seed=ctx.seed, run=run, checkpoint_path=ckpt,
                wall_time=wall_time)
    save_run(ckpt, run, subs)
    save_qnet(ctx.out / f"agent_{tag}.npz", run.qnet,
              {"subnets": [s.net.id for s in subs], "episodes": run.episode})
    write_log(ctx.out / f"train_{tag}.csv", run)
    print(f"{tag}: {run.episode} episodes, {run.env_steps} env steps")
    return run


def _log_rows(path):
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    # smoothed_reward sits at index 4 and env_steps at index 7, as in the training log
    return [(int(r[0]), r[1], r[2], r[3], float(r[4]), r[5], r[6], int(r[7])) for r in rows]


def cost_ratio(unified_log, per_subnet_logs: dict, tolerance: float = 0.05) -> dict:
    """Compare unified training against separately trained agents.

    The target is the mean of the per-subnet smoothed-reward plateaus; the
    unified cost is the env steps until its smoothed reward is within
    ``tolerance`` of that target.
    """
    plateaus = {k: plateau([r[4] for r in log]) for k, log in per_subnet_logs.items()}
    target = float(np.mean(list(plateaus.values())))
    per_total = sum(log[-1][7] for log in per_subnet_logs.values())
    per_reach = [steps_to_reach(log, plateaus[k], tolerance) for k, log in per_subnet_logs.items()]
    uni = steps_to_reach(unified_log, target, tolerance)
    return {
        "target_reward": target,
        "unified_plateau": plateau([r[4] for r in unified_log]),
        "unified_steps_to_target": uni,
        "unified_total_steps": unified_log[-1][7],
        "per_subnet_total_steps": per_total,
        "per_subnet_steps_to_plateau": None if None in per_reach else sum(per_reach),
        "ratio": None if uni is None else uni / per_total,
    }


def write_cost_ratio(ctx):
    uni = ctx.out / "train_unified.csv"
    per = {n.id: ctx.out / f"train_subnet{n.id}.csv" for n in ctx.dep.subnets}
    if not uni.is_file() or not all(p.is_file() for p in per.values()):
        return None
    res = cost_ratio(_log_rows(uni), {k: _log_rows(p) for k, p in per.items()})
    cols = list(res)
    write_rows(ctx.out / "cost_ratio.csv", cols,
               [["" if res[c] is None else (f"{res[c]:.6f}" if isinstance(res[c], float)
                                            else res[c]) for c in cols]],
               ctx.provenance())
    print(f"cost ratio (unified steps to target / per-subnet steps): {res['ratio']}")
    return res


def cmd_train(ctx: Context, args) -> int:
    codec_dir = args.codecs or ctx.out
    subs, _ = ctx.load_subnets(codec_dir)
    episodes = ctx.episodes if ctx.episodes is not None else 10_000
    if args.mode in ("unified", "both"):
        _train_one(ctx, subs, "unified", episodes, args.resume, args.wall_time)
    if args.mode in ("per-subnet", "both"):
        per = args.per_subnet_episodes or episodes
        for sub in subs:
            _train_one(ctx, [sub], f"subnet{sub.net.id}", per, args.resume, args.wall_time)
    write_cost_ratio(ctx)
    return 0


def _evaluate(ctx: Context, args, ranges=None, preset=None) -> int:
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for s in strategies:
        if s not in STRATEGIES:
            raise UsageError(f"unknown strategy {s!r}; choose from {', '.join(STRATEGIES)}")
    episodes = ctx.episodes if ctx.episodes is not None else int(ctx.eval_doc.get("episodes", 50))
    agent, digests = None, {}
    if "agent" in strategies:
        qpath = Path(args.agent) if args.agent else ctx.out / "agent_unified.npz"
        if not qpath.is_file():
            raise UsageError(f"missing agent checkpoint {qpath}; run train first")
        subs, digests = ctx.load_subnets(args.codecs or qpath.parent, ranges)
        agent = (subs, load_qnet(qpath))
        digests["agent"] = params_digest(qpath)
    ev = evaluate(ctx.dep, strategies, episodes, ctx.seed, agent, ranges)
    prov = ctx.provenance(episodes=episodes, checkpoints=json.dumps(digests, sort_keys=True))
    if preset:
        prov["preset"] = preset
    name = args.name or (f"splits_{preset}.csv" if preset else "metrics.csv")
    (ctx.out / name).write_text(metrics_csv(ev.rows, prov), encoding="utf-8")
    for r in ev.rows:
        if r[1] == "all":
            print(f"{r[0]:>7}: t={_num(r[3])} power/request={_num(r[6])} kW {r[9]}")
    return 0


def _num(v):
    return f"{v:.3f}" if isinstance(v, float) else str(v)


def cmd_evaluate(ctx, args) -> int:
    return _evaluate(ctx, args)


def cmd_splits(ctx, args) -> int:
    if args.preset == "option7_2":
        ranges = ctx.dep.request_ranges
    else:
        scales = dict((ctx.dep.raw.get("splits") or {}).get("option6") or {})
        scales.setdefault("fronthaul_scale", 1.5)
        scales.setdefault("gbps_scale", 1.5)
        ranges = scale_ranges(ctx.dep.request_ranges, scales["fronthaul_scale"],
                              scales["gbps_scale"])
    return _evaluate(ctx, args, ranges, args.preset)


def cmd_oracle(ctx, args) -> int:
    episodes = ctx.episodes if ctx.episodes is not None else int(ctx.eval_doc.get("episodes", 50))
    draws = request_draws(ctx.dep, episodes, ctx.seed)
    p = ctx.dep.power
    curve = PowerCurve(p["idle_kw"], p["max_kw"])
    rows = []
    for net in ctx.dep.subnets:
        for e, reqs in enumerate(draws[net.id]):
            try:
                r = exhaustive_optimum(net, reqs, ctx.dep.epsilon, curve, p["switch_kw"])
            except InstanceTooLarge as exc:
                rows.append((net.id, e, len(reqs), "", "", f"size guard: {exc}"))
                continue
            hosts = " | ".join(",".join(map(str, rec.hosts)) for rec in r.placements)
            rows.append((net.id, e, len(reqs), f"{r.power_kw:.6f}" if r.feasible_found else "",
                         hosts, r.note))
    write_rows(ctx.out / "oracle.csv",
               ("subnet_id", "episode", "n_requests", "power_kw", "hosts", "notes"), rows,
               ctx.provenance(episodes=episodes))
    print(f"oracle: {len(rows)} episodes -> {ctx.out / 'oracle.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML config path")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="root seed (defaults to the config's seed)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--episodes", type=int, default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="ranmaze", parents=[common],
                                description="Baseband function placement as a maze-walking DQN.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("train-codec", parents=[common], help="train one codec per sub-network")

    t = sub.add_parser("train", parents=[common], help="train DQN agents")
    t.add_argument("--mode", choices=("unified", "per-subnet", "both"), default="unified")
    t.add_argument("--codecs", help="directory holding codec_subnet<i>.npz (default: --out)")
    t.add_argument("--per-subnet-episodes", type=int)
    t.add_argument("--resume", action="store_true", help="continue from run_<tag>.pkl")
    t.add_argument("--wall-time", action="store_true", help="fill the wall_ms log column")

    for name, helptext in (("evaluate", "compare strategies"),
                           ("splits", "evaluate under a functional-split preset")):
        e = sub.add_parser(name, parents=[common], help=helptext)
        if name == "splits":
            e.add_argument("--preset", choices=PRESETS, required=True)
        e.add_argument("--strategies", default=",".join(STRATEGIES))
        e.add_argument("--agent", help="Q-network checkpoint (default: <out>/agent_unified.npz)")
        e.add_argument("--codecs", help="codec directory (default: the agent's directory)")
        e.add_argument("--name", help="output CSV file name")

    sub.add_parser("oracle", parents=[common], help="exhaustive optimum on sampled episodes")
    return p


COMMANDS = {"train-codec": cmd_train_codec, "train": cmd_train, "evaluate": cmd_evaluate,
            "splits": cmd_splits, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for k, v in (("config", None), ("seed", None), ("out", "."), ("episodes", None)):
        if not hasattr(args, k):
            setattr(args, k, v)
    try:
        ctx = Context(args)
        return COMMANDS[args.command](ctx, args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ranmaze: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, yaml.YAMLError) as exc:
        print(f"ranmaze: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

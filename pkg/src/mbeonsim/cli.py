"""Experiment front-end: qotdb/eval/train/compare subcommands.

Every command resolves the config, stamps its hash into each output CSV
and is deterministic for fixed config and seeds. Exit codes: 0 success,
1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .agent import DrlPolicy, PolicyValueNet, smoothed, train
from .config import ConfigError, ExperimentConfig, load_config
from .env import RmbsaEnv, blocking_probability, run_episode
from .heuristics import (
    BitRateAdaptiveFirstFit,
    DistanceAdaptiveFirstFit,
    FirstBandFirstFit,
    RandomPolicy,
)


def make_policy(name: str, cfg: ExperimentConfig, qdb, checkpoint: str | None = None):
    if name == "fbff":
        return FirstBandFirstFit(cfg.band_order)
    if name == "daff":
        return DistanceAdaptiveFirstFit(qdb, cfg.band_order)
    if name == "baff":
        return BitRateAdaptiveFirstFit(cfg.band_order)
    if name == "random":
        return RandomPolicy()
    if name == "drl":
        path = checkpoint or cfg.checkpoint
        if not path:
            raise ConfigError("policy 'drl' needs a checkpoint (--checkpoint or config)")
        if not os.path.exists(path):
            raise ConfigError(f"checkpoint not found: {path}")
        return DrlPolicy(PolicyValueNet.load(path), mode="greedy")
    raise ConfigError(f"unknown policy {name!r}")


def _write_csv(path, header, rows, cfg_hash: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_qotdb(cfg: ExperimentConfig) -> int:
    qdb = cfg.build_qot_database()
    out = os.path.join(cfg.out_dir, "qotdb.csv")
    os.makedirs(cfg.out_dir, exist_ok=True)
    qdb.to_csv(out, header_comment=f"config_hash={cfg.hash()}")
    print(f"wrote {out} ({qdb.n_entries()} entries)")
    return 0


def _eval_jobs(cfg: ExperimentConfig, policies: dict, topo, qdb):
    jobs = []
    for load in cfg.traffic.loads:
        for seed in cfg.seeds:
            for name in policies:
                jobs.append((load, seed, name))

    def run(job):
        load, seed, name = job
        env = RmbsaEnv(topo, cfg.band_plan, qdb, cfg.env_config(load))
        log = run_episode(env, policies[name], seed)
        return (load, seed, name, blocking_probability(log))

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    results.sort(key=lambda r: (r[0], r[1], r[2]))
    return results


def _summarize(results):
    grouped: dict[tuple, list[float]] = {}
    for load, _, name, bp in results:
        grouped.setdefault((load, name), []).append(bp)
    rows = []
    for (load, name), bps in sorted(grouped.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        rows.append([load, name, f"{np.mean(bps):.6f}", f"{np.std(bps):.6f}"])
    return rows


def _run_eval(cfg: ExperimentConfig, policy_names, checkpoint, prefix: str) -> int:
    topo = cfg.build_topology()
    qdb = cfg.build_qot_database(topo)
    policies = {name: make_policy(name, cfg, qdb, checkpoint) for name in policy_names}
    results = _eval_jobs(cfg, policies, topo, qdb)
    rows = [[load, seed, name, f"{bp:.6f}"] for load, seed, name, bp in results]
    out = os.path.join(cfg.out_dir, f"{prefix}.csv")
    _write_csv(out, ["load", "seed", "policy", "bp"], rows, cfg.hash())
    summary = os.path.join(cfg.out_dir, f"{prefix}_summary.csv")
    _write_csv(summary, ["load", "policy", "mean_bp", "std_bp"], _summarize(results), cfg.hash())
    print(f"wrote {out} ({len(rows)} rows) and {summary}")
    return 0


def cmd_eval(cfg: ExperimentConfig, checkpoint: str | None = None) -> int:
    return _run_eval(cfg, [cfg.policy], checkpoint, "eval")


def cmd_compare(cfg: ExperimentConfig, checkpoint: str | None = None) -> int:
    names = ["fbff", "daff", "baff", "random"]
    if checkpoint or cfg.checkpoint:
        names.append("drl")
    return _run_eval(cfg, names, checkpoint, "compare")


def cmd_train(cfg: ExperimentConfig) -> int:
    topo = cfg.build_topology()
    qdb = cfg.build_qot_database(topo)
    load = cfg.traffic.loads[0]
    env = RmbsaEnv(topo, cfg.band_plan, qdb, cfg.env_config(load))
    result = train(env, cfg.train, cfg.train_episodes, base_seed=cfg.seeds[0])

    os.makedirs(cfg.out_dir, exist_ok=True)
    log_rows = [
        [ep, f"{bp:.6f}", f"{pl:.6g}", f"{vl:.6g}", f"{ent:.6g}"]
        for ep, bp, pl, vl, ent in result.episodes
    ]
    _write_csv(
        os.path.join(cfg.out_dir, "train_log.csv"),
        ["episode", "bp", "policy_loss", "value_loss", "entropy"],
        log_rows,
        cfg.hash(),
    )
    raw = result.bp_series()
    smooth = smoothed(raw)
    curve_rows = [[i, f"{raw[i]:.6f}", f"{smooth[i]:.6f}"] for i in range(len(raw))]
    _write_csv(
        os.path.join(cfg.out_dir, "bp_curve.csv"),
        ["episode", "bp_raw", "bp_smoothed"],
        curve_rows,
        cfg.hash(),
    )
    ckpt = os.path.join(cfg.out_dir, "checkpoint.json")
    best = PolicyValueNet(env.observation_size, env.n_actions, cfg.train.hidden_layers)
    best.load_params(result.best_params if result.best_params is not None else result.net.params)
    best.save(ckpt)
    print(
        f"trained {cfg.train_episodes} episodes at load {load}; "
        f"best smoothed bp {result.best_smoothed_bp:.4f}; wrote {ckpt}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mbeonsim",
        description="QoT-aware multi-band RMBSA simulation and learning experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("qotdb", "precompute and export the connections QoT database"),
        ("eval", "run episodes for one policy over loads x seeds"),
        ("train", "train the actor-critic agent and export curves"),
        ("compare", "evaluate all baseline policies (and drl with a checkpoint)"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--policy", choices=["fbff", "daff", "baff", "random", "drl"])
        p.add_argument("--seed", type=int, action="append", help="override seeds (repeatable)")
        p.add_argument("--episodes", type=int, help="override training episode count")
        p.add_argument("--load", type=float, action="append", help="override loads (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--checkpoint", help="policy checkpoint for drl")
        p.add_argument("--workers", type=int, help="parallel eval workers")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            overrides={
                "policy": args.policy,
                "seeds": args.seed,
                "episodes": args.episodes,
                "loads": args.load,
                "out": args.out,
                "checkpoint": args.checkpoint,
                "workers": args.workers,
            },
        )
        if args.command == "qotdb":
            return cmd_qotdb(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "compare":
            return cmd_compare(cfg, args.checkpoint)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

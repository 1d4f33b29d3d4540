"""Command-line entry point: simulate | train | evaluate | sweep | plot.

Every run writes into its own output directory with a manifest tying the
artifacts to a config hash and seed. Exit codes: 0 success, 2 config error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__, gtr
from .env import UavMecEnv
from .errors import ConfigurationError, SkySimError
from .learner import Actor, train_async, train_sync
from .rng import substream
from .scenario import ScenarioConfig, config_hash, load_config

def _scenario_hash(config: ScenarioConfig) -> str:
    # Hash of the scenario itself; ignore the seed so a trained policy can be
    # evaluated on fresh episodes of the same world.
    return config_hash(dataclasses.replace(config, seed=0))


METRICS_HEADER = ["episode", "chi", "Q", "mean_secrecy", "energy_violations"]
TRAJECTORY_HEADER = ["slot", "uav_id", "x", "y", "z", "energy"]
TRAINING_HEADER = ["update", "version", "L_policy", "L_value", "mean_return",
                   "buffers_dropped"]
SWEEP_HEADER = ["axis", "value", "seed", "mean_chi", "mean_q", "mean_secrecy"]
SCHEMA_VERSION = 1


def _fmt(x: float) -> str:
    return f"{float(x):.10g}"


class Manifest:
    def __init__(self, out_dir: str, config: ScenarioConfig, seed: int):
        self.path = os.path.join(out_dir, "manifest.json")
        self.data = {
            "schema_version": SCHEMA_VERSION,
            "config_hash": config_hash(config),
            "seed": seed,
            "code_version": __version__,
            "started": datetime.now(timezone.utc).isoformat(),
            "finished": None,
            "status": "running",
            "outputs": [],
        }
        os.makedirs(out_dir, exist_ok=True)
        self.save()

    def add_output(self, path: str) -> None:
        self.data["outputs"].append(path)
        self.save()

    def finish(self, status: str = "ok") -> None:
        self.data["finished"] = datetime.now(timezone.utc).isoformat()
        self.data["status"] = status
        self.save()

    def save(self) -> None:
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=1)


# ---------------------------------------------------------------------------
# episode rollouts


def _rollout_random(env: UavMecEnv, rng: np.random.Generator):
    env.reset()
    infos = []
    done = False
    while not done:
        out = env.step(env.sample_random_actions(rng))
        infos.append(out.info)
        done = out.done
    return infos


def _episode_metrics(env: UavMecEnv, infos) -> dict:
    from .aoi import aoi_penalty, violation_ratio
    cfg = env.config
    chi = violation_ratio(env.tracker, cfg.horizon_slots, cfg.chi_normalize)
    q = aoi_penalty(env.tracker, cfg.ue_weight_array)
    mean_sec = float(np.mean([i["secrecy_sum"] for i in infos])) if infos else 0.0
    viol = sum(sum(i["flags"]["c1"]) + sum(i["flags"]["c2"]) for i in infos)
    return {"chi": chi, "Q": q, "mean_secrecy": mean_sec, "energy_violations": viol}


def run_episodes(config: ScenarioConfig, episodes: int, seed: int,
                 checkpoint_dir: str | None, metrics_path: str,
                 trajectory_path: str | None) -> list[dict]:
    env = UavMecEnv(config, seed=seed)
    actor = None
    if checkpoint_dir is not None:
        params = _load_policy(checkpoint_dir, config)
        actor = Actor(env, params, substream(seed, "policy"))
    rng = substream(seed, "policy")

    rows = []
    trajectory: list[list] = []
    for ep in range(episodes):
        if actor is not None:
            env.reset(seed=seed + ep)
            infos = []
            histories = [[env._observations()[u]] for u in range(env.n_uavs)]
            done = False
            slot = 0
            while not done:
                bundle, _, _ = actor.actions_from_obs(histories)
                out = env.step(bundle)
                infos.append(out.info)
                for u in range(env.n_uavs):
                    histories[u].append(out.observations[u])
                _log_traj(trajectory, env, slot)
                slot += 1
                done = out.done
        else:
            env.reset(seed=seed + ep)
            infos = []
            done = False
            slot = 0
            while not done:
                out = env.step(env.sample_random_actions(rng))
                infos.append(out.info)
                _log_traj(trajectory, env, slot)
                slot += 1
                done = out.done
            if ep < episodes - 1:
                trajectory = []
        metrics = _episode_metrics(env, infos)
        metrics["episode"] = ep
        rows.append(metrics)
        if ep < episodes - 1:
            trajectory = []

    with open(metrics_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow([row["episode"], _fmt(row["chi"]), _fmt(row["Q"]),
                             _fmt(row["mean_secrecy"]), row["energy_violations"]])
    if trajectory_path is not None:
        with open(trajectory_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRAJECTORY_HEADER)
            for row in trajectory:
                writer.writerow(row)
    return rows


def _log_traj(trajectory: list, env: UavMecEnv, slot: int) -> None:
    pos = env._uav_positions()
    remaining = env.remaining_energy()
    for u in range(env.n_uavs):
        trajectory.append([slot, u, _fmt(pos[u, 0]), _fmt(pos[u, 1]),
                           _fmt(pos[u, 2]), _fmt(remaining[u])])


# ---------------------------------------------------------------------------
# checkpoints


def save_policy(snapshot: dict, directory: str, config: ScenarioConfig) -> None:
    os.makedirs(directory, exist_ok=True)
    for kind, params in snapshot.items():
        gtr.save_checkpoint(params, os.path.join(directory, kind),
                            extra={"config_hash": _scenario_hash(config)})


def _load_policy(directory: str, config: ScenarioConfig) -> dict:
    params = {}
    expected = _scenario_hash(config)
    for kind in ("cuav", "iuav"):
        ps, manifest = gtr.load_checkpoint(os.path.join(directory, kind))
        if manifest.get("config_hash") != expected:
            raise ConfigurationError(
                f"checkpoint config hash {manifest.get('config_hash')} does not "
                f"match scenario hash {expected}")
        params[kind] = ps
    return params


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, checkpoint_required: bool = False) -> int:
    config = load_config(args.config, args.seed)
    if checkpoint_required and not args.checkpoint:
        raise ConfigurationError("evaluate requires --checkpoint")
    out_dir = _out_dir(args)
    manifest = Manifest(out_dir, config, config.seed)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    traj_path = os.path.join(out_dir, "trajectory.csv")
    run_episodes(config, args.episodes, config.seed, args.checkpoint,
                 metrics_path, traj_path)
    manifest.add_output(metrics_path)
    manifest.add_output(traj_path)
    manifest.finish()
    print(f"wrote {metrics_path}")
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config, args.seed)
    out_dir = _out_dir(args)
    manifest = Manifest(out_dir, config, config.seed)
    training_path = os.path.join(out_dir, "training.csv")
    ckpt_dir = os.path.join(out_dir, "checkpoint")
    episodes = args.episodes if args.episodes else config.learn.episodes

    fh = open(training_path, "w", newline="", encoding="utf-8")
    writer = csv.writer(fh)
    writer.writerow(TRAINING_HEADER)

    def on_update(stats):
        writer.writerow([stats["episode"], stats["version"],
                         _fmt(stats["policy_loss"]), _fmt(stats["value_loss"]),
                         _fmt(stats["mean_return"]), stats["dropped"]])

    def ckpt_cb(snapshot, version):
        save_policy(snapshot, ckpt_dir, config)

    try:
        if args.sync or args.workers <= 1:
            snapshot = train_sync(config, episodes, config.seed, on_update,
                                  ckpt_cb, args.ckpt_every)
        else:
            snapshot = train_async(config, episodes, config.seed, args.workers,
                                   on_update, ckpt_cb, args.ckpt_every)
    except KeyboardInterrupt:
        fh.close()
        manifest.finish("interrupted")
        return 3
    fh.close()
    save_policy(snapshot, ckpt_dir, config)
    manifest.add_output(training_path)
    manifest.add_output(ckpt_dir)
    manifest.finish()
    print(f"wrote {training_path} and {ckpt_dir}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config, args.seed)
    if args.axis not in ("num_cuavs", "num_iuavs"):
        raise ConfigurationError("sweep axis must be num_cuavs or num_iuavs")
    values = sorted(int(v) for v in args.values.split(","))
    seeds = [int(s) for s in args.seeds.split(",")]
    out_dir = _out_dir(args)
    manifest = Manifest(out_dir, config, config.seed)
    sweep_path = os.path.join(out_dir, "sweep.csv")

    with open(sweep_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        for value in values:
            cfg_v = dataclasses.replace(config, **{args.axis: value})
            for seed in seeds:
                cfg_run = dataclasses.replace(cfg_v, seed=seed)
                ckpt = None
                if args.train_each:
                    sub = os.path.join(out_dir, f"{args.axis}_{value}_s{seed}")
                    os.makedirs(sub, exist_ok=True)
                    snapshot = train_sync(cfg_run, args.train_episodes, seed)
                    ckpt = os.path.join(sub, "checkpoint")
                    save_policy(snapshot, ckpt, cfg_run)
                metrics_path = os.path.join(out_dir,
                                            f"{args.axis}_{value}_s{seed}_metrics.csv")
                rows = run_episodes(cfg_run, args.episodes, seed, ckpt,
                                    metrics_path, None)
                writer.writerow([args.axis, value, seed,
                                 _fmt(np.mean([r["chi"] for r in rows])),
                                 _fmt(np.mean([r["Q"] for r in rows])),
                                 _fmt(np.mean([r["mean_secrecy"] for r in rows]))])
    manifest.add_output(sweep_path)
    manifest.finish()
    print(f"wrote {sweep_path}")
    return 0


def _read_csv(path: str, expected_header: list[str]) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SkySimError(f"{path}:1: empty CSV")
        if header != expected_header:
            missing = set(expected_header) - set(header)
            raise SkySimError(f"{path}:1: unexpected header; missing {sorted(missing)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SkySimError(f"{path}:{lineno}: expected {len(header)} fields")
            rows.append(dict(zip(header, row)))
    return rows


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = _out_dir(args)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for path in args.csv:
        name = os.path.splitext(os.path.basename(path))[0]
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        fig, ax = plt.subplots(figsize=(6, 5))
        if header == TRAJECTORY_HEADER:
            rows = _read_csv(path, TRAJECTORY_HEADER)
            by_uav: dict = {}
            for r in rows:
                by_uav.setdefault(r["uav_id"], []).append((float(r["x"]), float(r["y"])))
            for uav, pts in sorted(by_uav.items()):
                xs, ys = zip(*pts)
                ax.plot(xs, ys, marker=".", label=f"UAV {uav}")
            ax.set_xlabel("x (m)")
            ax.set_ylabel("y (m)")
            ax.legend(fontsize=7)
        elif header == SWEEP_HEADER:
            rows = _read_csv(path, SWEEP_HEADER)
            for metric in ("mean_chi", "mean_q", "mean_secrecy"):
                agg: dict = {}
                for r in rows:
                    agg.setdefault(int(r["value"]), []).append(float(r[metric]))
                xs = sorted(agg)
                ax.plot(xs, [np.mean(agg[x]) for x in xs], marker="o", label=metric)
            ax.set_xlabel(rows[0]["axis"] if rows else "fleet size")
            ax.legend()
        elif header == METRICS_HEADER:
            rows = _read_csv(path, METRICS_HEADER)
            for metric in ("chi", "Q", "mean_secrecy"):
                ax.plot([int(r["episode"]) for r in rows],
                        [float(r[metric]) for r in rows], label=metric)
            ax.set_xlabel("episode")
            ax.legend()
        else:
            raise SkySimError(f"{path}:1: unknown CSV schema {header}")
        img = os.path.join(out_dir, f"{name}.png")
        fig.savefig(img, dpi=120)
        plt.close(fig)
        written.append(img)
    print("wrote " + ", ".join(written))
    return 0


# ---------------------------------------------------------------------------


def _out_dir(args) -> str:
    base = args.out or os.environ.get("SKYSIM_OUT", "runs")
    os.makedirs(base, exist_ok=True)
    return base


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skysim")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)

    p_sim = sub.add_parser("simulate", help="roll out episodes and export metrics")
    common(p_sim)
    p_sim.add_argument("--episodes", type=int, default=10)
    p_sim.add_argument("--checkpoint", default=None)

    p_eval = sub.add_parser("evaluate", help="simulate with a trained checkpoint")
    common(p_eval)
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.add_argument("--checkpoint", required=True)

    p_train = sub.add_parser("train", help="run the actor/learner loop")
    common(p_train)
    p_train.add_argument("--episodes", type=int, default=0)
    p_train.add_argument("--workers", type=int, default=1)
    p_train.add_argument("--sync", action="store_true")
    p_train.add_argument("--ckpt-every", type=int, default=0)

    p_sweep = sub.add_parser("sweep", help="metrics vs fleet size")
    common(p_sweep)
    p_sweep.add_argument("--axis", required=True)
    p_sweep.add_argument("--values", required=True)
    p_sweep.add_argument("--seeds", default="0")
    p_sweep.add_argument("--episodes", type=int, default=10)
    p_sweep.add_argument("--train-each", action="store_true")
    p_sweep.add_argument("--train-episodes", type=int, default=100)

    p_plot = sub.add_parser("plot", help="render CSV outputs to images")
    p_plot.add_argument("csv", nargs="+")
    p_plot.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "evaluate":
            return cmd_simulate(args, checkpoint_required=True)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "plot":
            return cmd_plot(args)
        parser.error("unknown command")
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SkySimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

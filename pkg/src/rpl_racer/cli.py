"""Command-line entry points: train, eval, record, slip-hist.

Exit codes: 0 success, 1 config error, 2 asset error, 3 runtime failure.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import checkpoint as ckpt
from . import ppo
from .config import load_train_config, make_env, train_config_from_dict
from .env import load_track
from .errors import AssetError, ConfigError, RacerError
from .evaluate import (evaluate_tracks, record_trajectory,
                       slip_histogram_from_records)

EXIT_CONFIG = 1
EXIT_ASSET = 2
EXIT_RUNTIME = 3


def _run(fn):
    try:
        return fn()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except AssetError as exc:
        click.echo(f"asset error: {exc}", err=True)
        sys.exit(EXIT_ASSET)
    except (RacerError, OSError, ValueError) as exc:
        click.echo(f"runtime failure: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


@click.group()
def main():
    """Residual racing-control stack: training, evaluation, analysis."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(), help="training config (YAML)")
@click.option("--seed", type=int, default=None, help="override config seed")
@click.option("--resume", type=click.Path(), default=None,
              help="checkpoint to resume from")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="output directory (default: alongside the config)")
def train(config_path, seed, resume, out_dir):
    """Train the residual policy with PPO."""

    def body():
        cfg = load_train_config(config_path, overrides={"seed": seed})
        out = Path(out_dir) if out_dir else Path(config_path).parent / "runs"
        final = ppo.train(cfg, out, resume=resume)
        click.echo(f"final checkpoint: {final}")

    _run(body)


def _load_eval_agent(ckpt_path):
    arrays, meta = ckpt.load_checkpoint(ckpt_path)
    agent = ckpt.restore_agent(arrays, meta)
    stats = ckpt.restore_obs_stats(arrays)
    return agent, stats, meta


def _eval_envs(track_paths, meta, seed):
    cfg = train_config_from_dict(
        {**(meta.get("config") or {"tracks": ["unused"]}),
         "tracks": list(track_paths)})
    envs = {}
    for i, tp in enumerate(track_paths):
        assets = load_track(tp, v_max=cfg.vehicle.v_max)
        envs[assets.name] = make_env(assets, cfg, seed=seed + i)
    return envs


def _resolve_tracks(tracks):
    """A comma list of track dirs, or a root directory holding them."""
    paths = []
    for part in tracks.split(","):
        p = Path(part)
        if (p / "map.yaml").is_file():
            paths.append(p)
        elif p.is_dir():
            subs = sorted(d for d in p.iterdir()
                          if (d / "map.yaml").is_file())
            if not subs:
                raise AssetError(f"no track directories under {p}")
            paths.extend(subs)
        else:
            raise AssetError(f"track not found: {part}")
    return paths


@main.command("eval")
@click.option("--ckpt", "ckpt_path", type=click.Path(), default=None,
              help="checkpoint (required for rpl mode)")
@click.option("--tracks", required=True,
              help="comma list of track dirs, or a root directory")
@click.option("--mode", type=click.Choice(["base", "rpl"]), default="base")
@click.option("--laps", type=int, default=2, show_default=True)
@click.option("--starts", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def eval_cmd(ckpt_path, tracks, mode, laps, starts, seed, out_path):
    """Median lap times per track (running starts, deterministic policy)."""

    def body():
        agent = stats = None
        meta = {}
        if mode == "rpl":
            if ckpt_path is None:
                raise ConfigError("rpl mode requires --ckpt")
            agent, stats, meta = _load_eval_agent(ckpt_path)
        envs = _eval_envs(_resolve_tracks(tracks), meta, seed)
        report = evaluate_tracks(envs, mode, agent=agent, obs_stats=stats,
                                 laps=laps, starts=starts, seed=seed)
        report.write(out_path)
        click.echo(f"wrote {out_path}")

    _run(body)


@main.command()
@click.option("--ckpt", "ckpt_path", type=click.Path(), default=None)
@click.option("--track", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["base", "rpl"]), default="base")
@click.option("--laps", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lidar-stride", type=int, default=0,
              help="store every Nth lidar range (0 = omit)")
@click.option("--out", "out_path", required=True, type=click.Path())
def record(ckpt_path, track, mode, laps, seed, lidar_stride, out_path):
    """Record a per-step trajectory with the action decomposition."""

    def body():
        agent = stats = None
        meta = {}
        if mode == "rpl":
            if ckpt_path is None:
                raise ConfigError("rpl mode requires --ckpt")
            agent, stats, meta = _load_eval_agent(ckpt_path)
        envs = _eval_envs([Path(track)], meta, seed)
        env = next(iter(envs.values()))
        start = int(np.random.default_rng(seed)
                    .integers(len(env.assets.line)))
        n = record_trajectory(env, out_path, agent=agent, obs_stats=stats,
                              mode=mode, laps=laps, start_index=start,
                              lidar_stride=lidar_stride)
        click.echo(f"wrote {n} steps to {out_path}")

    _run(body)


@main.command("slip-hist")
@click.option("--in", "in_paths", multiple=True, required=True,
              type=click.Path(), help="trajectory record file(s)")
@click.option("--bin", "bin_width", type=float, default=0.01,
              show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def slip_hist(in_paths, bin_width, out_path):
    """Aggregate slip-angle histogram from trajectory records."""

    def body():
        for p in in_paths:
            if not Path(p).is_file():
                raise AssetError(f"record file not found: {p}")
        hist = slip_histogram_from_records(in_paths, bin_width=bin_width)
        hist.write(out_path)
        click.echo(
            f"{hist.total} samples, beta in "
            f"[{hist.beta_min:.4f}, {hist.beta_max:.4f}] -> {out_path}")

    _run(body)


if __name__ == "__main__":
    main()

"""Evaluation harness: lap timing, trajectory records, slip histograms."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .env import RacingEnv
from .normalize import RunningStats
from .policy import ActorCritic, mean_action

MODES = ("base", "rpl")


def _residual_fn(agent: ActorCritic | None, obs_stats: RunningStats | None,
                 mode: str):
    """Deterministic per-step residual for evaluation.

    rpl mode uses the mean of the stochastic policy (tanh of the network
    mean) with frozen normalization statistics; base mode applies no
    residual.
    """
    if mode == "base":
        return lambda obs: None
    if agent is None or obs_stats is None:
        raise ValueError("rpl mode requires a checkpointed agent and stats")
    agent.eval()

    def fn(obs):
        z = obs_stats.normalize(obs)
        with torch.no_grad():
            mean, _, _ = agent(torch.as_tensor(z, dtype=torch.float32)[None])
        return mean_action(mean)[0].numpy().astype(np.float64)

    return fn


@dataclass
class LapRun:
    lap_times: list = field(default_factory=list)
    collisions: int = 0
    steps: int = 0


def run_laps(env: RacingEnv, agent=None, obs_stats=None, mode="base",
             laps: int = 2, start_index=None, max_steps=None) -> LapRun:
    """Drive until `laps` completed laps or a collision (running start)."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    residual = _residual_fn(agent, obs_stats, mode)
    env.max_laps = laps
    obs, _ = env.reset(start_index=start_index)
    if max_steps is None:
        v_min = float(env.assets.line.v.min())
        max_steps = int(3 * laps * env.assets.line.length
                        / max(v_min, 0.1) / env.DT) + 1000
    run = LapRun()
    for _ in range(max_steps):
        obs, _, done, info = env.step(residual(obs))
        run.steps += 1
        if done:
            run.lap_times = list(info["lap_times"])
            if info["collision"]:
                run.collisions += 1
                # collision invalidates the lap in progress
            return run
    run.lap_times = list(env.timer.lap_times)
    return run


@dataclass
class EvalReport:
    """Per-track lap-time summary for the base and residual controllers."""

    rows: list = field(default_factory=list)

    COLUMNS = ("track", "laps_base", "laps_rpl", "collisions_base",
               "collisions_rpl", "t_base_median", "t_rpl_median",
               "diff", "rel_improvement")

    def add(self, track, base_times, rpl_times, collisions_base,
            collisions_rpl):
        t_base = float(np.median(base_times)) if base_times else None
        t_rpl = float(np.median(rpl_times)) if rpl_times else None
        diff = rel = None
        if t_base is not None and t_rpl is not None:
            diff = t_base - t_rpl
            rel = diff / t_base
        self.rows.append({
            "track": track,
            "laps_base": len(base_times),
            "laps_rpl": len(rpl_times),
            "collisions_base": collisions_base,
            "collisions_rpl": collisions_rpl,
            "t_base_median": t_base,
            "t_rpl_median": t_rpl,
            "diff": diff,
            "rel_improvement": rel,
        })

    def write(self, path):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        lines = [",".join(self.COLUMNS)]
        for row in self.rows:
            lines.append(",".join(fmt(row[c]) for c in self.COLUMNS))
        Path(path).write_text("\n".join(lines) + "\n")


def evaluate_tracks(envs: dict, mode: str, agent=None, obs_stats=None,
                    laps: int = 2, starts: int = 3, seed: int = 0,
                    compare_base: bool = True) -> EvalReport:
    """Run the lap-time protocol on every track.

    Each track gets `starts` random running starts of `laps` laps each;
    medians are taken over all completed laps. In rpl mode the base
    controller is also run from identical starts so the report carries the
    improvement columns.
    """
    report = EvalReport()
    for name, env in envs.items():
        rng = np.random.default_rng(seed)
        start_indices = [int(rng.integers(len(env.assets.line)))
                         for _ in range(starts)]
        runs = {"base": ([], 0), "rpl": ([], 0)}
        modes = [mode] if (mode == "base" or not compare_base) else \
            ["base", "rpl"]
        for m in modes:
            times, colls = [], 0
            for idx in start_indices:
                run = run_laps(env, agent=agent, obs_stats=obs_stats,
                               mode=m, laps=laps, start_index=idx)
                times.extend(run.lap_times)
                colls += run.collisions
            runs[m] = (times, colls)
        report.add(name, runs["base"][0], runs["rpl"][0],
                   runs["base"][1], runs["rpl"][1])
    return report


def record_trajectory(env: RacingEnv, out_path, agent=None, obs_stats=None,
                      mode="base", laps: int = 1, start_index=None,
                      lidar_stride: int = 0, max_steps=None) -> int:
    """Run and write one line-delimited record per step.

    Each record carries the state, the base/residual/applied action split,
    the reward, and the lap index; lidar_stride > 0 additionally stores
    every lidar_stride-th range.
    """
    residual = _residual_fn(agent, obs_stats, mode)
    env.max_laps = laps
    obs, _ = env.reset(start_index=start_index)
    if max_steps is None:
        v_min = float(env.assets.line.v.min())
        max_steps = int(3 * laps * env.assets.line.length
                        / max(v_min, 0.1) / env.DT) + 1000
    n = 0
    scale = env.scale.as_array()
    with Path(out_path).open("w") as fh:
        for step in range(max_steps):
            res = residual(obs)
            obs, reward, done, info = env.step(res)
            s = info["state"]
            a_b = info["base_action"]
            a_rb = info["applied_action"]
            a_r = (scale * info["residual"]).tolist()
            rec = {
                "t": round((step + 1) * env.DT, 6),
                "x": s.x, "y": s.y, "delta": s.delta, "v": s.v,
                "psi": s.psi, "psi_dot": s.psi_dot, "beta": s.beta,
                "a_base": [a_b.steer, a_b.speed],
                "a_residual": a_r,
                "a_applied": [a_rb.steer, a_rb.speed],
                "reward": reward,
                "lap": info["laps"],
                "collision": info["collision"],
            }
            if lidar_stride > 0:
                rec["lidar"] = np.round(
                    obs[:env.layout.n_beams:lidar_stride], 4).tolist()
            fh.write(json.dumps(rec) + "\n")
            n += 1
            if done:
                break
    return n


@dataclass
class SlipHistogram:
    """Histogram of slip angles on a fixed grid of bin_width-wide bins.

    Bin k covers [k * bin_width, (k + 1) * bin_width), so histograms with
    the same bin width merge exactly.
    """

    bin_width: float = 0.01
    counts: dict = field(default_factory=dict)
    beta_min: float = math.inf
    beta_max: float = -math.inf

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def add(self, beta: float):
        k = int(math.floor(beta / self.bin_width))
        self.counts[k] = self.counts.get(k, 0) + 1
        self.beta_min = min(self.beta_min, beta)
        self.beta_max = max(self.beta_max, beta)

    def merge(self, other: "SlipHistogram") -> "SlipHistogram":
        if abs(other.bin_width - self.bin_width) > 1e-15:
            raise ValueError("cannot merge histograms with different bins")
        for k, c in other.counts.items():
            self.counts[k] = self.counts.get(k, 0) + c
        self.beta_min = min(self.beta_min, other.beta_min)
        self.beta_max = max(self.beta_max, other.beta_max)
        return self

    def to_dict(self) -> dict:
        ks = sorted(self.counts)
        return {
            "bin_width": self.bin_width,
            "bin_left_edges": [k * self.bin_width for k in ks],
            "counts": [self.counts[k] for k in ks],
            "beta_min": self.beta_min if self.total else None,
            "beta_max": self.beta_max if self.total else None,
            "n": self.total,
        }

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def slip_histogram_from_records(paths, bin_width: float = 0.01) -> SlipHistogram:
    hist = SlipHistogram(bin_width=bin_width)
    for path in paths:
        with Path(path).open() as fh:
            for line in fh:
                line = line.strip()
                if line:
                    hist.add(float(json.loads(line)["beta"]))
    return hist

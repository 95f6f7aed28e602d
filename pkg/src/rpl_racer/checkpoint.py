"""Checkpoints: self-describing containers of named flat arrays.

A checkpoint is a .npz holding every network parameter (param/<name>),
optimizer moments (opt/...), normalization statistics (stats/...), and a
JSON metadata blob with the format version, the observation-layout
descriptor, the training step counter, and a config snapshot.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
import torch

from .normalize import RewardNormalizer, RunningStats
from .observation import ObservationLayout
from .policy import ActorCritic

FORMAT_VERSION = 1


def save_checkpoint(path, agent: ActorCritic, obs_stats: RunningStats,
                    reward_norm: RewardNormalizer | None = None,
                    optimizer: torch.optim.Optimizer | None = None,
                    step: int = 0, update: int = 0,
                    config: dict | None = None):
    arrays = {}
    for name, p in agent.state_dict().items():
        arrays[f"param/{name}"] = p.detach().cpu().numpy()
    for k, v in obs_stats.state_dict().items():
        arrays[f"stats/obs/{k}"] = np.asarray(v)
    if reward_norm is not None:
        for k, v in reward_norm.state_dict().items():
            arrays[f"stats/reward/{k}"] = np.asarray(v)
    if optimizer is not None:
        state = optimizer.state_dict()["state"]
        params = list(agent.parameters())
        names = _param_names(agent)
        for idx, entry in state.items():
            name = names.get(idx, str(idx))
            for key, val in entry.items():
                if isinstance(val, torch.Tensor):
                    arrays[f"opt/{name}/{key}"] = val.detach().cpu().numpy()
                else:
                    arrays[f"opt/{name}/{key}"] = np.asarray(val)
        del params
    meta = {
        "format_version": FORMAT_VERSION,
        "layout": json.loads(agent.layout.describe()),
        "arch": agent.arch,
        "step": int(step),
        "update": int(update),
        "config": config or {},
    }
    arrays["meta"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    path.write_bytes(buf.getvalue())


def _param_names(agent):
    return {i: name for i, (name, _) in enumerate(agent.named_parameters())}


def load_checkpoint(path):
    """Load a checkpoint into a dict of arrays plus parsed metadata."""
    with np.load(Path(path), allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(bytes(arrays.pop("meta")).decode())
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint format {meta.get('format_version')}"
        )
    return arrays, meta


def restore_agent(arrays, meta) -> ActorCritic:
    layout = ObservationLayout(
        n_beams=meta["layout"]["n_beams"],
        n_waypoints=meta["layout"]["n_waypoints"],
        n_stack=meta["layout"]["n_stack"],
        frame_features=tuple(meta["layout"]["frame_features"]),
    )
    arch = meta.get("arch", {})
    agent = ActorCritic(
        layout=layout,
        conv_channels=tuple(arch.get("conv_channels", (16, 32))),
        kernel_size=arch.get("kernel_size", 5),
        stride=arch.get("stride", 2),
        pool=arch.get("pool", 2),
        embed_dim=arch.get("embed_dim", 128),
        hidden=tuple(arch.get("hidden", (400, 300))),
        n_actions=arch.get("n_actions", 2),
    )
    state = {k[len("param/"):]: torch.from_numpy(np.array(v))
             for k, v in arrays.items() if k.startswith("param/")}
    agent.load_state_dict(state)
    return agent


def restore_obs_stats(arrays) -> RunningStats:
    stats = RunningStats()
    stats.load_state_dict({
        "count": arrays["stats/obs/count"],
        "mean": arrays["stats/obs/mean"],
        "m2": arrays["stats/obs/m2"],
    })
    return stats


def restore_reward_norm(arrays, gamma: float) -> RewardNormalizer | None:
    key = "stats/reward/returns"
    if key not in arrays:
        return None
    norm = RewardNormalizer(n_envs=len(arrays[key]), gamma=gamma)
    norm.load_state_dict({
        "returns": arrays["stats/reward/returns"],
        "stats_count": arrays["stats/reward/stats_count"],
        "stats_mean": arrays["stats/reward/stats_mean"],
        "stats_m2": arrays["stats/reward/stats_m2"],
    })
    return norm


def restore_optimizer(arrays, optimizer, agent):
    """Load Adam moments back into an optimizer (for resume)."""
    names = _param_names(agent)
    state = {}
    for idx, name in names.items():
        prefix = f"opt/{name}/"
        entry = {}
        for k, v in arrays.items():
            if k.startswith(prefix):
                key = k[len(prefix):]
                if key == "step":
                    entry[key] = torch.as_tensor(np.array(v))
                else:
                    entry[key] = torch.from_numpy(np.array(v))
        if entry:
            state[idx] = entry
    sd = optimizer.state_dict()
    sd["state"] = state
    optimizer.load_state_dict(sd)

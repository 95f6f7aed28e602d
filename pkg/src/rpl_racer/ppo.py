"""PPO-Clip training of the residual policy.

Rollout collection over parallel environments, generalized advantage
estimation, clipped-surrogate updates with KL-based early stopping, and
running observation/reward normalization.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .env import VectorEnv
from .normalize import RewardNormalizer, RunningStats
from .policy import ActorCritic, sample_action, tanh_normal_log_prob

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GAEConfig:
    gamma: float = 0.998
    lam: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")


@dataclass(frozen=True)
class PPOConfig:
    clip_eps: float = 0.2
    minibatch_size: int = 128
    update_epochs: int = 10
    target_kl: float = 0.01
    learning_rate: float = 3e-4
    anneal_lr: bool = True
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    max_grad_norm: float = 0.5
    total_steps: int = 10_000_000
    rollout_steps: int = 2048

    def __post_init__(self):
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be > 0")
        if self.minibatch_size <= 0:
            raise ValueError("minibatch_size must be > 0")


@dataclass
class TransitionBatch:
    """Rollout storage, shape (T, n_envs, ...)."""

    obs: np.ndarray
    pre_squash: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    bootstrap_value: np.ndarray
    episode_returns: list = field(default_factory=list)
    lap_times: list = field(default_factory=list)
    collisions: int = 0


def collect_rollout(agent: ActorCritic, venv: VectorEnv, obs_raw: np.ndarray,
                    n_steps: int, obs_stats: RunningStats,
                    reward_norm: RewardNormalizer,
                    torch_gen: torch.Generator | None = None,
                    episode_returns_acc=None) -> tuple[TransitionBatch, np.ndarray]:
    """Collect n_steps from every env with frozen policy weights.

    Observations are normalized online (stats updated during collection);
    rewards are scaled by the running std of the discounted return. Returns
    the batch and the raw observation carried to the next rollout.
    """
    n = len(venv)
    d = venv.obs_dim
    batch = TransitionBatch(
        obs=np.empty((n_steps, n, d), dtype=np.float64),
        pre_squash=np.empty((n_steps, n, 2)),
        actions=np.empty((n_steps, n, 2)),
        log_probs=np.empty((n_steps, n)),
        rewards=np.empty((n_steps, n)),
        values=np.empty((n_steps, n)),
        dones=np.empty((n_steps, n), dtype=bool),
        bootstrap_value=np.empty(n),
    )
    if episode_returns_acc is None:
        episode_returns_acc = np.zeros(n)

    agent.eval()
    with torch.no_grad():
        for t in range(n_steps):
            obs_stats.update(obs_raw)
            obs_n = obs_stats.normalize(obs_raw)
            obs_t = torch.as_tensor(obs_n, dtype=torch.float32)
            mean, log_std, value = agent(obs_t)
            u, a, logp = sample_action(mean, log_std, generator=torch_gen)

            actions = a.numpy().astype(np.float64)
            obs_raw, rewards, dones, infos = venv.step(actions)

            episode_returns_acc += rewards
            for i, info in enumerate(infos):
                if dones[i]:
                    batch.episode_returns.append(episode_returns_acc[i])
                    episode_returns_acc[i] = 0.0
                    batch.lap_times.extend(info.get("lap_times", []))
                    if info.get("collision"):
                        batch.collisions += 1

            batch.obs[t] = obs_n
            batch.pre_squash[t] = u.numpy()
            batch.actions[t] = actions
            batch.log_probs[t] = logp.numpy()
            batch.rewards[t] = reward_norm.update_and_normalize(rewards, dones)
            batch.values[t] = value.numpy()
            batch.dones[t] = dones

        obs_n = obs_stats.normalize(obs_raw)
        _, _, v_boot = agent(torch.as_tensor(obs_n, dtype=torch.float32))
        batch.bootstrap_value = v_boot.numpy()
    return batch, obs_raw


def compute_gae(rewards, values, dones, bootstrap_value,
                cfg: GAEConfig = GAEConfig()):
    """GAE advantages and value-regression returns.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)
    A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}
    returns = advantages + values
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    last = np.zeros_like(np.asarray(bootstrap_value, dtype=np.float64))
    next_value = np.asarray(bootstrap_value, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        mask = 1.0 - dones[t]
        delta = rewards[t] + cfg.gamma * next_value * mask - values[t]
        last = delta + cfg.gamma * cfg.lam * mask * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values


def ppo_update(agent: ActorCritic, optimizer: torch.optim.Optimizer,
               batch: TransitionBatch, advantages, returns,
               cfg: PPOConfig = PPOConfig(),
               np_rng: np.random.Generator | None = None) -> dict:
    """Clipped-surrogate update with KL early stopping.

    The KL estimate (mean of log pi_old - log pi_new over the minibatch) is
    checked before each gradient step; once it exceeds target_kl no further
    weights change in this update phase.
    """
    np_rng = np_rng or np.random.default_rng(0)
    obs = torch.as_tensor(
        batch.obs.reshape(-1, batch.obs.shape[-1]), dtype=torch.float32)
    u_old = torch.as_tensor(
        batch.pre_squash.reshape(-1, 2), dtype=torch.float32)
    logp_old = torch.as_tensor(batch.log_probs.reshape(-1),
                               dtype=torch.float32)
    adv_all = np.asarray(advantages, dtype=np.float64).reshape(-1)
    ret_all = torch.as_tensor(np.asarray(returns).reshape(-1),
                              dtype=torch.float32)
    n = obs.shape[0]
    mb = cfg.minibatch_size

    saved = {k: v.detach().clone() for k, v in agent.state_dict().items()}
    pg_losses, v_losses, entropies, kls, clipfracs = [], [], [], [], []
    stopped = False
    epochs_run = 0
    agent.train()
    for epoch in range(cfg.update_epochs):
        idx = np_rng.permutation(n)
        epochs_run = epoch + 1
        for start in range(0, n - mb + 1, mb):
            sel = idx[start:start + mb]
            sel_t = torch.as_tensor(sel)
            mean, log_std, value = agent(obs[sel_t])
            logp = tanh_normal_log_prob(mean, log_std, u_old[sel_t])
            logratio = logp - logp_old[sel_t]
            with torch.no_grad():
                approx_kl = float((-logratio).mean())
            kls.append(approx_kl)
            if approx_kl > cfg.target_kl:
                stopped = True
                break

            mb_adv = adv_all[sel]
            mb_adv = (mb_adv - mb_adv.mean()) / (mb_adv.std() + 1e-8)
            adv_t = torch.as_tensor(mb_adv, dtype=torch.float32)

            ratio = torch.exp(logratio)
            clipped = torch.clamp(
                ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
            surrogate = torch.min(ratio * adv_t, clipped * adv_t)
            pg_loss = -surrogate.mean()
            v_loss = ((value - ret_all[sel_t]) ** 2).mean()
            entropy = (0.5 * (1.0 + np.log(2.0 * np.pi))
                       + log_std).sum()
            loss = pg_loss + cfg.vf_coef * v_loss - cfg.ent_coef * entropy

            if not torch.isfinite(loss):
                log.error("non-finite PPO loss; restoring pre-update weights")
                agent.load_state_dict(saved)
                return {"aborted": True, "pg_loss": float("nan"),
                        "v_loss": float("nan"), "kl": approx_kl,
                        "clip_frac": 0.0, "epochs_run": epochs_run,
                        "entropy": float(entropy.detach())}

            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(agent.parameters(),
                                           cfg.max_grad_norm)
            optimizer.step()

            with torch.no_grad():
                clipfracs.append(
                    float((torch.abs(ratio - 1.0) > cfg.clip_eps)
                          .float().mean()))
            pg_losses.append(float(pg_loss.detach()))
            v_losses.append(float(v_loss.detach()))
            entropies.append(float(entropy.detach()))
        if stopped:
            break

    return {
        "aborted": False,
        "pg_loss": float(np.mean(pg_losses)) if pg_losses else 0.0,
        "v_loss": float(np.mean(v_losses)) if v_losses else 0.0,
        "entropy": float(np.mean(entropies)) if entropies else 0.0,
        "kl": kls[-1] if kls else 0.0,
        "clip_frac": float(np.mean(clipfracs)) if clipfracs else 0.0,
        "epochs_run": epochs_run,
        "early_stop": stopped,
    }


def train(train_cfg, out_dir, resume=None, metrics_name="metrics.jsonl"):
    """Full training loop: alternate rollout collection and PPO updates.

    train_cfg is a TrainConfig (see config.py). Writes line-delimited
    metrics and periodic checkpoints into out_dir; returns the final
    checkpoint path.
    """
    from .config import build_envs  # deferred to avoid an import cycle

    torch.manual_seed(train_cfg.seed)
    np_rng = np.random.default_rng(train_cfg.seed)
    torch_gen = torch.Generator().manual_seed(train_cfg.seed + 1)

    venv, layout = build_envs(train_cfg)
    agent = ActorCritic(layout=layout)
    ppo_cfg = train_cfg.ppo
    gae_cfg = train_cfg.gae
    optimizer = torch.optim.Adam(agent.parameters(),
                                 lr=ppo_cfg.learning_rate, eps=1e-5)

    obs_stats = RunningStats(shape=(layout.dim,))
    reward_norm = RewardNormalizer(n_envs=len(venv), gamma=gae_cfg.gamma)
    step = 0
    update = 0
    if resume is not None:
        arrays, meta = ckpt.load_checkpoint(resume)
        agent = ckpt.restore_agent(arrays, meta)
        optimizer = torch.optim.Adam(agent.parameters(),
                                     lr=ppo_cfg.learning_rate, eps=1e-5)
        ckpt.restore_optimizer(arrays, optimizer, agent)
        obs_stats = ckpt.restore_obs_stats(arrays)
        restored = ckpt.restore_reward_norm(arrays, gae_cfg.gamma)
        if restored is not None and len(restored.returns) == len(venv):
            reward_norm = restored
        step = meta["step"]
        update = meta["update"]

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / metrics_name

    steps_per_rollout = ppo_cfg.rollout_steps * len(venv)
    n_updates = max(
        (ppo_cfg.total_steps - step + steps_per_rollout - 1)
        // steps_per_rollout, 0)
    total_updates = max((ppo_cfg.total_steps + steps_per_rollout - 1)
                        // steps_per_rollout, 1)

    obs_raw = venv.reset()
    ep_return_acc = np.zeros(len(venv))
    mode = "a" if resume is not None and metrics_path.exists() else "w"
    with metrics_path.open(mode) as metrics:
        for _ in range(n_updates):
            if ppo_cfg.anneal_lr:
                frac = 1.0 - update / total_updates
                lr = ppo_cfg.learning_rate * max(frac, 0.0)
                for group in optimizer.param_groups:
                    group["lr"] = lr
            else:
                lr = ppo_cfg.learning_rate

            batch, obs_raw = collect_rollout(
                agent, venv, obs_raw, ppo_cfg.rollout_steps, obs_stats,
                reward_norm, torch_gen=torch_gen,
                episode_returns_acc=ep_return_acc)
            adv, returns = compute_gae(batch.rewards, batch.values,
                                       batch.dones, batch.bootstrap_value,
                                       gae_cfg)
            report = ppo_update(agent, optimizer, batch, adv, returns,
                                ppo_cfg, np_rng=np_rng)
            step += steps_per_rollout
            update += 1

            record = {
                "step": step,
                "update": update,
                "lr": lr,
                "episode_return_mean": (
                    float(np.mean(batch.episode_returns))
                    if batch.episode_returns else None),
                "episodes": len(batch.episode_returns),
                "lap_times": [round(t, 4) for t in batch.lap_times],
                "collisions": batch.collisions,
                "pg_loss": report["pg_loss"],
                "v_loss": report["v_loss"],
                "kl": report["kl"],
                "clip_frac": report["clip_frac"],
                "epochs_run": report["epochs_run"],
            }
            metrics.write(json.dumps(record, sort_keys=True) + "\n")
            metrics.flush()

            if update % train_cfg.checkpoint_interval == 0:
                ckpt.save_checkpoint(
                    out_dir / f"checkpoint_{update:06d}.npz", agent,
                    obs_stats, reward_norm, optimizer, step=step,
                    update=update, config=train_cfg.snapshot())

    final = out_dir / "checkpoint_final.npz"
    ckpt.save_checkpoint(final, agent, obs_stats, reward_norm, optimizer,
                         step=step, update=update,
                         config=train_cfg.snapshot())
    return final

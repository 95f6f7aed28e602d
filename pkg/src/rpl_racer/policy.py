"""Residual policy: network, TanhNormal action head, composition, reward."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .dynamics import HighLevelAction
from .observation import ObservationLayout
from .params import VehicleParams

LOG_STD_INIT = math.log(0.5)
TANH_EPS = 1e-6

# Residual authority after tanh squashing: +-0.05 rad steering, +-1 m/s speed.
RESIDUAL_SCALE = (0.05, 1.0)


class ActorCritic(nn.Module):
    """Shared-perception actor-critic for the residual controller.

    A two-layer 1D-conv stack (16 then 32 filters, ReLU, average pooling)
    embeds the lidar ranges; the embedding is shared by the policy and value
    heads. Each head is a 400/300 ReLU MLP over [embedding, waypoints,
    vehicle frames]. The policy outputs a state-dependent action mean with a
    state-independent log-std parameter vector.
    """

    def __init__(self, layout: ObservationLayout | None = None,
                 conv_channels=(16, 32), kernel_size=5, stride=2, pool=2,
                 embed_dim=128, hidden=(400, 300), n_actions=2):
        super().__init__()
        self.layout = layout or ObservationLayout()
        self.arch = {
            "conv_channels": list(conv_channels),
            "kernel_size": kernel_size, "stride": stride, "pool": pool,
            "embed_dim": embed_dim, "hidden": list(hidden),
            "n_actions": n_actions,
        }
        n_beams = self.layout.n_beams

        self.conv1 = nn.Conv1d(1, conv_channels[0], kernel_size, stride)
        self.conv2 = nn.Conv1d(conv_channels[0], conv_channels[1],
                               kernel_size, stride)
        self.pool = nn.AvgPool1d(pool)
        self.act = nn.ReLU()

        n = (n_beams - kernel_size) // stride + 1
        n //= pool
        n = (n - kernel_size) // stride + 1
        n //= pool
        self.embed = nn.Linear(conv_channels[1] * n, embed_dim)

        rest = self.layout.dim - n_beams
        trunk_in = embed_dim + rest

        def mlp(out_dim):
            return nn.Sequential(
                nn.Linear(trunk_in, hidden[0]), nn.ReLU(),
                nn.Linear(hidden[0], hidden[1]), nn.ReLU(),
                nn.Linear(hidden[1], out_dim),
            )

        self.actor = mlp(n_actions)
        self.critic = mlp(1)
        self.log_std = nn.Parameter(torch.full((n_actions,), LOG_STD_INIT))

        # near-zero initial residual so early behavior matches the base
        # controller
        with torch.no_grad():
            self.actor[-1].weight.mul_(0.01)
            self.actor[-1].bias.zero_()

    def _features(self, obs: torch.Tensor) -> torch.Tensor:
        n_beams = self.layout.n_beams
        lidar = obs[:, :n_beams].unsqueeze(1)
        z = self.pool(self.act(self.conv1(lidar)))
        z = self.pool(self.act(self.conv2(z)))
        z = self.act(self.embed(z.flatten(1)))
        return torch.cat([z, obs[:, n_beams:]], dim=1)

    def forward(self, obs: torch.Tensor):
        """Returns (mean [B, 2], log_std [2], value [B])."""
        if obs.ndim != 2 or obs.shape[1] != self.layout.dim:
            raise ValueError(
                f"expected observations of shape [B, {self.layout.dim}], "
                f"got {tuple(obs.shape)}"
            )
        feats = self._features(obs)
        return self.actor(feats), self.log_std, self.critic(feats).squeeze(-1)


def tanh_normal_log_prob(mean, log_std, u):
    """Log-density of a = tanh(u) under the squashed Gaussian.

    Normal log-density of the pre-squash sample minus the tanh
    change-of-variables log-determinant.
    """
    std = torch.exp(log_std)
    normal = -0.5 * (((u - mean) / std) ** 2) - log_std \
        - 0.5 * math.log(2.0 * math.pi)
    correction = torch.log(1.0 - torch.tanh(u) ** 2 + TANH_EPS)
    return (normal - correction).sum(-1)


def sample_action(mean, log_std, generator=None):
    """Sample (pre-squash u, action in [-1, 1]^2, log-prob)."""
    std = torch.exp(log_std)
    noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype,
                        device=mean.device)
    u = mean + std * noise
    a = torch.tanh(u)
    return u, a, tanh_normal_log_prob(mean, log_std, u)


def mean_action(mean):
    """Deterministic evaluation action: the distribution mode tanh(mu)."""
    return torch.tanh(mean)


@dataclass(frozen=True)
class ResidualScale:
    steer: float = RESIDUAL_SCALE[0]
    speed: float = RESIDUAL_SCALE[1]

    def as_array(self):
        return np.array([self.steer, self.speed])


def residual_compose(policy_out, scale: ResidualScale,
                     a_base: HighLevelAction,
                     params: VehicleParams) -> HighLevelAction:
    """a = scale * policy_out + a_base, clamped to the physical bounds."""
    steer = scale.steer * float(policy_out[0]) + a_base.steer
    speed = scale.speed * float(policy_out[1]) + a_base.speed
    steer = max(-params.delta_max, min(params.delta_max, steer))
    speed = max(0.0, min(params.v_max, speed))
    return HighLevelAction(steer=steer, speed=speed)


# Reward coefficients: forward speed bonus, lateral speed penalty,
# collision penalty.
TAU_SPEED = 0.003
TAU_LATERAL = -0.003
RHO_COLLISION = -50.0


def compute_reward(v_x: float, v_y: float, collided: bool) -> float:
    return (TAU_SPEED * v_x + TAU_LATERAL * v_y * v_y
            + (RHO_COLLISION if collided else 0.0))

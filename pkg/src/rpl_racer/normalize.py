"""Running mean/variance statistics for observation and reward scaling."""

from __future__ import annotations

import numpy as np

CLIP = 10.0
VAR_EPS = 1e-8


class RunningStats:
    """Welford-style online mean/variance with exact merging.

    Merging two accumulators equals accumulating the concatenated stream up
    to floating-point associativity.
    """

    def __init__(self, shape=()):
        self.count = 0.0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    @property
    def var(self):
        if self.count < 2:
            return np.ones_like(self.mean)
        return self.m2 / self.count

    @property
    def std(self):
        return np.sqrt(self.var + VAR_EPS)

    def update(self, x):
        """Accumulate a single sample or a batch (leading axis)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape == self.mean.shape:
            x = x[None]
        n = x.shape[0]
        batch_mean = x.mean(axis=0)
        batch_m2 = ((x - batch_mean) ** 2).sum(axis=0)
        self._merge(n, batch_mean, batch_m2)
        return self

    def _merge(self, count, mean, m2):
        if self.count == 0:
            self.count = float(count)
            self.mean = np.array(mean, dtype=np.float64)
            self.m2 = np.array(m2, dtype=np.float64)
            return
        total = self.count + count
        delta = mean - self.mean
        self.m2 = self.m2 + m2 + delta ** 2 * self.count * count / total
        self.mean = self.mean + delta * count / total
        self.count = total

    def merge(self, other: "RunningStats"):
        self._merge(other.count, other.mean, other.m2)
        return self

    def normalize(self, x):
        """(x - mean) / sqrt(var + eps), clipped to +-10."""
        if self.count == 0:
            return np.clip(np.asarray(x, dtype=np.float64), -CLIP, CLIP)
        z = (np.asarray(x, dtype=np.float64) - self.mean) / self.std
        return np.clip(z, -CLIP, CLIP)

    def state_dict(self):
        return {"count": np.asarray(self.count), "mean": self.mean,
                "m2": self.m2}

    def load_state_dict(self, d):
        self.count = float(d["count"])
        self.mean = np.array(d["mean"], dtype=np.float64)
        self.m2 = np.array(d["m2"], dtype=np.float64)
        return self


class RewardNormalizer:
    """Scales rewards by the running std of the discounted return."""

    def __init__(self, n_envs: int, gamma: float):
        self.gamma = gamma
        self.returns = np.zeros(n_envs)
        self.stats = RunningStats(())

    def update_and_normalize(self, rewards, dones):
        rewards = np.asarray(rewards, dtype=np.float64)
        self.returns = self.returns * self.gamma + rewards
        self.stats.update(self.returns)
        self.returns[np.asarray(dones, dtype=bool)] = 0.0
        return np.clip(rewards / self.stats.std, -CLIP, CLIP)

    def state_dict(self):
        return {"returns": self.returns, **{
            f"stats_{k}": v for k, v in self.stats.state_dict().items()
        }}

    def load_state_dict(self, d):
        self.returns = np.array(d["returns"], dtype=np.float64)
        self.stats.load_state_dict({
            "count": d["stats_count"], "mean": d["stats_mean"],
            "m2": d["stats_m2"],
        })
        return self

"""Per-pair Gaussian next-state models and the uniform intervention policy.

For an ordered agent pair (source, target) the model reads the source's
observation and action and predicts a diagonal Gaussian over the target's
next observation: the network emits `(mean, raw_log_std)` and the log-std is
clamped to [LOG_STD_MIN, LOG_STD_MAX] so densities stay bounded. Fitting
minimizes the exact negative log-likelihood with analytic gradients.

`marginal_log_prob` integrates the action out under an intervention
distribution by simple Monte Carlo: draw K actions, average the conditional
densities in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nets import Adam, DenseNet

__all__ = ["LOG_STD_MIN", "LOG_STD_MAX", "InterventionPolicy", "PairDynamicsModel"]

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class InterventionPolicy:
    """Uniform distribution over an axis-aligned action box.

    Sampling actions from this fixed full-support distribution (instead of
    from any agent's policy) is what turns the influence score into an
    interventional quantity rather than a correlational one.
    """

    low: tuple
    high: tuple

    def __post_init__(self):
        lo = np.asarray(self.low, dtype=np.float64)
        hi = np.asarray(self.high, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise ValueError("low/high must be 1-D bounds of equal length")
        if not np.all(lo < hi):
            raise ValueError("each low bound must be strictly below its high bound")
        object.__setattr__(self, "low", tuple(float(v) for v in lo))
        object.__setattr__(self, "high", tuple(float(v) for v in hi))

    @classmethod
    def symmetric(cls, dim: int, bound: float = 1.0) -> "InterventionPolicy":
        return cls((-bound,) * dim, (bound,) * dim)

    @property
    def dim(self) -> int:
        return len(self.low)

    def sample(self, rng, n: int) -> np.ndarray:
        """Draw `n` actions, shape `(n, dim)`."""
        lo = np.asarray(self.low)
        hi = np.asarray(self.high)
        return rng.uniform(lo, hi, size=(int(n), self.dim))


class PairDynamicsModel:
    """Gaussian model of one agent's next observation given another agent's
    current observation and action."""

    def __init__(self, source: int, target: int, source_dim: int, action_dim: int,
                 target_dim: int, hidden=(64, 64), lr=1e-3, rng=None):
        self.source = int(source)
        self.target = int(target)
        self.source_dim = int(source_dim)
        self.action_dim = int(action_dim)
        self.target_dim = int(target_dim)
        sizes = [source_dim + action_dim, *hidden, 2 * target_dim]
        self.net = DenseNet(sizes, activation="relu", rng=rng)
        self.opt = Adam(self.net.param_count, lr=lr)

    def _inputs(self, states, actions):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if states.shape[1] != self.source_dim or actions.shape[1] != self.action_dim:
            raise ValueError("state/action width does not match this pair model")
        if states.shape[0] != actions.shape[0]:
            raise ValueError("state/action batch sizes differ")
        return np.concatenate([states, actions], axis=1)

    def predict(self, states, actions):
        """Return `(mean, log_std)`, each `(B, target_dim)`."""
        out = self.net.forward(self._inputs(states, actions))
        mean = out[:, :self.target_dim]
        log_std = np.clip(out[:, self.target_dim:], LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def log_prob(self, states, actions, next_states) -> np.ndarray:
        """Per-sample log density of `next_states`, shape `(B,)`."""
        mean, log_std = self.predict(states, actions)
        x = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
        if x.shape != mean.shape:
            raise ValueError("next_states width does not match this pair model")
        z = (x - mean) / np.exp(log_std)
        return -0.5 * np.sum(z * z, axis=1) - np.sum(log_std, axis=1) \
            - 0.5 * self.target_dim * _LOG_2PI

    def sample_next(self, states, actions, rng) -> np.ndarray:
        mean, log_std = self.predict(states, actions)
        return mean + np.exp(log_std) * rng.standard_normal(mean.shape)

    def nll_fit_step(self, states, actions, next_states) -> float:
        """One optimizer step on the mean negative log-likelihood.

        Gradients are exact: d(nll)/d(mean) = (mean - x) / var and
        d(nll)/d(log_std) = 1 - z^2, zeroed where the clamp is active.
        Returns the pre-step loss.
        """
        inputs = self._inputs(states, actions)
        x = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
        out = self.net.forward(inputs)
        mean = out[:, :self.target_dim]
        raw = out[:, self.target_dim:]
        if x.shape != mean.shape:
            raise ValueError("next_states width does not match this pair model")
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        std = np.exp(log_std)
        z = (x - mean) / std
        nll = float(np.mean(0.5 * np.sum(z * z, axis=1) + np.sum(log_std, axis=1)
                            + 0.5 * self.target_dim * _LOG_2PI))
        if not np.isfinite(nll):
            raise FloatingPointError("non-finite dynamics loss")
        batch = x.shape[0]
        up_mean = (mean - x) / (std * std) / batch
        active = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
        up_raw = (1.0 - z * z) / batch * active
        grad, _ = self.net.backward(inputs, np.concatenate([up_mean, up_raw], axis=1))
        self.net.params = self.opt.step(self.net.params, grad)
        return nll

    def marginal_log_prob(self, intervention: InterventionPolicy, state,
                          next_state, k: int = 64, rng=None) -> float:
        """log p(next_state | state) under the intervention, by Monte Carlo.

        Averages the conditional density over `k` sampled actions in log
        space (log-sum-exp minus log k), so the result never exceeds the best
        conditional log density among the draws.
        """
        if k < 1:
            raise ValueError("need at least one action sample")
        if rng is None:
            raise ValueError("marginal_log_prob needs an rng")
        state = np.asarray(state, dtype=np.float64).ravel()
        next_state = np.asarray(next_state, dtype=np.float64).ravel()
        actions = intervention.sample(rng, k)
        states = np.tile(state, (k, 1))
        nexts = np.tile(next_state, (k, 1))
        lp = self.log_prob(states, actions, nexts)
        m = lp.max()
        return float(m + np.log(np.mean(np.exp(lp - m))))

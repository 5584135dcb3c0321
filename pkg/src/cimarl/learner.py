"""Centralized-critic, decentralized-actor learning.

Each agent owns a deterministic actor over its own observation and a critic
that reads every agent's observation and action (centralized training,
decentralized execution). Critics regress onto

    y = r_ext + r_int + gamma * Q_target(next_obs, target_actions)

where `r_int` is the already-scaled intrinsic reward (zero for the plain
baseline) and episodes have a fixed horizon, so no terminal masking is
applied. Actors ascend their own critic through the critic's input gradient;
critic parameters receive no update from actor steps. Target copies of every
network track the online ones by Polyak averaging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import Adam, DenseNet, soft_update

__all__ = ["ReplayBuffer", "Batch", "Agent", "MADDPG", "act", "update_all"]


@dataclass
class Batch:
    """Stacked replay sample: lists are per-agent, arrays are (B, dim)."""

    obs: list
    actions: list
    rewards: np.ndarray
    next_obs: list
    done: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring buffer over joint transitions.

    Writes overwrite the oldest slot once full; sampling is uniform with
    replacement so a batch can repeat indices.
    """

    def __init__(self, capacity: int, obs_dims, action_dims):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs_dims = list(obs_dims)
        self.action_dims = list(action_dims)
        n = len(self.obs_dims)
        self._obs = [np.zeros((self.capacity, d)) for d in self.obs_dims]
        self._actions = [np.zeros((self.capacity, d)) for d in self.action_dims]
        self._next_obs = [np.zeros((self.capacity, d)) for d in self.obs_dims]
        self._rewards = np.zeros(self.capacity)
        self._done = np.zeros(self.capacity)
        self._n_agents = n
        self.size = 0
        self.cursor = 0

    def __len__(self) -> int:
        return self.size

    def push(self, obs, actions, reward, next_obs, done):
        c = self.cursor
        for i in range(self._n_agents):
            self._obs[i][c] = obs[i]
            self._actions[i][c] = actions[i]
            self._next_obs[i][c] = next_obs[i]
        self._rewards[c] = reward
        self._done[c] = float(done)
        self.cursor = (c + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng) -> Batch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=int(batch_size))
        return Batch(
            obs=[o[idx] for o in self._obs],
            actions=[a[idx] for a in self._actions],
            rewards=self._rewards[idx],
            next_obs=[o[idx] for o in self._next_obs],
            done=self._done[idx])

    def sample_actions(self, agent: int, n: int, rng) -> np.ndarray:
        """Uniform sample of stored actions of one agent (ablation source)."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=int(n))
        return self._actions[agent][idx]

    def state_arrays(self) -> dict:
        """Raw storage for checkpointing, keyed by array name."""
        out = {"rewards": self._rewards, "done": self._done}
        for i in range(self._n_agents):
            out[f"obs_{i}"] = self._obs[i]
            out[f"actions_{i}"] = self._actions[i]
            out[f"next_obs_{i}"] = self._next_obs[i]
        return out


def act(actor: DenseNet, obs, noise_scale: float, rng=None) -> np.ndarray:
    """Deterministic action plus optional exploration noise, kept in the box.

    The actor's tanh output already lies in [-1, 1]; noise is added after
    squashing and the result clipped back. `noise_scale` 0 skips the draw
    entirely so evaluation consumes no randomness.
    """
    action = actor.forward(np.asarray(obs, dtype=np.float64))
    if noise_scale > 0.0:
        if rng is None:
            raise ValueError("exploration noise needs an rng")
        action = action + noise_scale * rng.standard_normal(action.shape)
    return np.clip(action, -1.0, 1.0)


class Agent:
    """Actor/critic pair with target copies and optimizers for one agent."""

    def __init__(self, index: int, obs_dim: int, action_dim: int, joint_dim: int,
                 hidden=(64, 64), actor_lr=1e-3, critic_lr=1e-3, rng=None):
        self.index = index
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.actor = DenseNet([obs_dim, *hidden, action_dim],
                              output_activation="tanh", rng=rng)
        self.critic = DenseNet([joint_dim, *hidden, 1], rng=rng)
        self.actor_target = self.actor.clone()
        self.critic_target = self.critic.clone()
        self.actor_opt = Adam(self.actor.param_count, lr=actor_lr)
        self.critic_opt = Adam(self.critic.param_count, lr=critic_lr)


class MADDPG:
    """All agents plus the joint critic plumbing.

    The critic input layout is fixed: every observation in agent order, then
    every action in agent order. `action_offset(i)` locates agent i's action
    columns inside that joint vector, which is how actor gradients flow
    through the critic input without touching critic parameters.
    """

    def __init__(self, obs_dims, action_dims, gamma=0.95, tau=0.01,
                 actor_lr=1e-3, critic_lr=1e-3, hidden=(64, 64), rng=None):
        if len(obs_dims) != len(action_dims) or not obs_dims:
            raise ValueError("need matching, non-empty obs/action dim lists")
        if not 0.0 <= gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        self.obs_dims = list(obs_dims)
        self.action_dims = list(action_dims)
        self.gamma = float(gamma)
        self.tau = float(tau)
        self.n_agents = len(obs_dims)
        joint = sum(obs_dims) + sum(action_dims)
        self.agents = [Agent(i, obs_dims[i], action_dims[i], joint,
                             hidden=hidden, actor_lr=actor_lr,
                             critic_lr=critic_lr, rng=rng)
                       for i in range(self.n_agents)]

    def action_offset(self, i: int) -> int:
        return sum(self.obs_dims) + sum(self.action_dims[:i])

    def act_all(self, obs, noise_scale: float, rng=None) -> list:
        return [act(self.agents[i].actor, obs[i], noise_scale, rng)
                for i in range(self.n_agents)]

    @staticmethod
    def _joint(obs, actions) -> np.ndarray:
        return np.concatenate(list(obs) + list(actions), axis=1)

    def critic_loss(self, i: int, batch: Batch, intrinsic: np.ndarray):
        """MSE of agent i's critic against the bootstrapped target.

        `intrinsic` is the per-sample intrinsic reward for agent i, already
        scaled by its mixing weight. Returns `(loss, param_grad)` without
        applying any update.
        """
        agent = self.agents[i]
        target_actions = [self.agents[j].actor_target.forward(batch.next_obs[j])
                          for j in range(self.n_agents)]
        q_next = agent.critic_target.forward(
            self._joint(batch.next_obs, target_actions))[:, 0]
        y = batch.rewards + intrinsic + self.gamma * q_next
        joint = self._joint(batch.obs, batch.actions)
        q = agent.critic.forward(joint)[:, 0]
        diff = q - y
        loss = float(np.mean(diff * diff))
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite critic loss")
        upstream = (2.0 * diff / diff.size)[:, None]
        grad, _ = agent.critic.backward(joint, upstream)
        return loss, grad

    def actor_loss(self, i: int, batch: Batch):
        """Mean of -Q_i with agent i's action replaced by its actor output.

        The gradient reaches the actor only through the critic's input
        columns for agent i's action; critic parameters are left alone.
        Returns `(loss, actor_param_grad)`.
        """
        agent = self.agents[i]
        my_action = agent.actor.forward(batch.obs[i])
        actions = [my_action if j == i else batch.actions[j]
                   for j in range(self.n_agents)]
        joint = self._joint(batch.obs, actions)
        q = agent.critic.forward(joint)[:, 0]
        loss = float(-np.mean(q))
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite actor loss")
        b = q.size
        upstream = np.full((b, 1), -1.0 / b)
        _, input_grad = agent.critic.backward(joint, upstream)
        off = self.action_offset(i)
        action_grad = input_grad[:, off:off + self.action_dims[i]]
        grad, _ = agent.actor.backward(batch.obs[i], action_grad)
        return loss, grad

    def critic_step(self, i: int, batch: Batch, intrinsic: np.ndarray) -> float:
        agent = self.agents[i]
        loss, grad = self.critic_loss(i, batch, intrinsic)
        agent.critic.params = agent.critic_opt.step(agent.critic.params, grad)
        return loss

    def actor_step(self, i: int, batch: Batch) -> float:
        agent = self.agents[i]
        loss, grad = self.actor_loss(i, batch)
        agent.actor.params = agent.actor_opt.step(agent.actor.params, grad)
        return loss

    def soft_update_targets(self):
        for agent in self.agents:
            agent.actor_target.params = soft_update(
                agent.actor_target.params, agent.actor.params, self.tau)
            agent.critic_target.params = soft_update(
                agent.critic_target.params, agent.critic.params, self.tau)

    def update(self, batch: Batch, intrinsic: np.ndarray) -> dict:
        """Critic steps for every agent, then actor steps, then targets.

        `intrinsic` has shape `(n_agents, B)` and must already include the
        mixing weight. Returns per-agent losses.
        """
        critic_losses = [self.critic_step(i, batch, intrinsic[i])
                         for i in range(self.n_agents)]
        actor_losses = [self.actor_step(i, batch)
                        for i in range(self.n_agents)]
        self.soft_update_targets()
        return {"critic": critic_losses, "actor": actor_losses}


@dataclass
class UpdateReport:
    """What one full update did, for logging."""

    critic_losses: list
    actor_losses: list
    dynamics_losses: dict
    statistic_bounds: dict
    intrinsic_mean: np.ndarray   # per agent, alpha-scaled
    pair_influence: dict         # ordered pair -> mean clamped value


def update_all(learner: MADDPG, buffer: ReplayBuffer, rewarder, alpha: float,
               action_source, batch_size: int, warmup: int, rng_buffer,
               rng_causal):
    """One complete training update in a fixed order.

    Below `warmup` stored transitions this is a no-op returning None.
    Otherwise one batch is drawn and reused for every stage: dynamics fit,
    statistic ascent, intrinsic-reward scoring, critic regression, actor
    ascent, target tracking. With `rewarder` None (or alpha 0) the causal
    stages are skipped entirely and the intrinsic term is zero, which is
    exactly the plain baseline.
    """
    if len(buffer) < warmup or len(buffer) == 0:
        return None
    batch = buffer.sample(batch_size, rng_buffer)
    n = learner.n_agents
    if rewarder is not None and alpha > 0.0:
        dynamics_losses = rewarder.fit_step(batch.obs, batch.actions,
                                            batch.next_obs)
        statistic_bounds = rewarder.statistic_step(batch.obs, action_source,
                                                   rng_causal)
        values, pair_influence = rewarder.intrinsic_batch(batch.obs,
                                                          action_source,
                                                          rng_causal)
        intrinsic = alpha * values
    else:
        dynamics_losses = {}
        statistic_bounds = {}
        pair_influence = {}
        intrinsic = np.zeros((n, batch.rewards.size))
    losses = learner.update(batch, intrinsic)
    return UpdateReport(
        critic_losses=losses["critic"], actor_losses=losses["actor"],
        dynamics_losses=dynamics_losses, statistic_bounds=statistic_bounds,
        intrinsic_mean=intrinsic.mean(axis=1), pair_influence=pair_influence)

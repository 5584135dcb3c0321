"""State-conditional influence scores and the intrinsic reward they feed.

The dependence between one agent's action and another agent's next
observation, conditioned on the acting agent's current observation, is
scored through the Donsker-Varadhan representation of KL divergence: a
scalar "statistic" network T is trained to separate jointly sampled
(state, action, next-state) triples from triples whose action was re-paired
at random. The bound

    mean_joint T - log mean_marginal exp(T)

is tight at T = log(joint / product-of-marginals) + const, and its positive
part is the per-pair influence value. Actions are drawn from a fixed
full-support intervention distribution (or, for the ablation, replayed from
a buffer) and next states come from the learned pair dynamics model, so the
score never requires extra environment interaction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import InterventionPolicy, PairDynamicsModel
from .nets import Adam, DenseNet

__all__ = [
    "StatisticNetwork", "InfluenceEstimate", "RewardBreakdown", "CausalRewarder",
    "dv_bound", "dv_ascent_step", "train_statistic_step", "estimate_influence",
    "estimate_influence_batch", "intrinsic_reward", "combine_reward",
    "logmeanexp", "random_derangements", "ordered_pairs",
    "uniform_action_source", "buffer_action_source",
]


def ordered_pairs(n_agents: int) -> list:
    """All ordered (source, target) pairs with source != target."""
    return [(i, j) for i in range(n_agents) for j in range(n_agents) if j != i]


def logmeanexp(values: np.ndarray, axis=None) -> np.ndarray:
    """Numerically stable log(mean(exp(values))) along `axis`."""
    values = np.asarray(values, dtype=np.float64)
    m = values.max(axis=axis, keepdims=True)
    out = m + np.log(np.mean(np.exp(values - m), axis=axis, keepdims=True))
    return out.squeeze(axis) if axis is not None else float(out.squeeze())


class StatisticNetwork:
    """Scalar critic T(state, action, next_state) for one ordered pair."""

    def __init__(self, source: int, target: int, source_dim: int, action_dim: int,
                 target_dim: int, hidden=(64, 64), lr=1e-3, rng=None):
        self.source = int(source)
        self.target = int(target)
        self.source_dim = int(source_dim)
        self.action_dim = int(action_dim)
        self.target_dim = int(target_dim)
        sizes = [source_dim + action_dim + target_dim, *hidden, 1]
        self.net = DenseNet(sizes, activation="relu", rng=rng)
        self.opt = Adam(self.net.param_count, lr=lr)

    def rows(self, states, actions, next_states) -> np.ndarray:
        return np.concatenate([np.atleast_2d(states), np.atleast_2d(actions),
                               np.atleast_2d(next_states)], axis=1)


def dv_bound(net: DenseNet, joint_rows, marginal_rows) -> float:
    """Donsker-Varadhan lower bound mean_j T - log mean_m exp(T).

    With identical joint and marginal batches the value is <= 0 for any T
    (Jensen), so a positive bound always reflects genuine separation.
    """
    joint_rows = np.atleast_2d(joint_rows)
    marginal_rows = np.atleast_2d(marginal_rows)
    if joint_rows.shape[0] == 0 or marginal_rows.shape[0] == 0:
        raise ValueError("empty batch")
    t_joint = net.forward(joint_rows)[:, 0]
    t_marg = net.forward(marginal_rows)[:, 0]
    return float(t_joint.mean() - logmeanexp(t_marg))


def dv_ascent_step(net: DenseNet, opt: Adam, joint_rows, marginal_rows) -> float:
    """One gradient-ascent step on the bound; returns the pre-step value.

    d(bound)/dT_joint = 1/B; d(bound)/dT_marg = -softmax(T_marg), the exact
    gradient of -log mean exp.
    """
    joint_rows = np.atleast_2d(joint_rows)
    marginal_rows = np.atleast_2d(marginal_rows)
    t_joint = net.forward(joint_rows)[:, 0]
    t_marg = net.forward(marginal_rows)[:, 0]
    m = t_marg.max()
    w = np.exp(t_marg - m)
    bound = float(t_joint.mean() - (m + np.log(w.mean())))
    if not np.isfinite(bound):
        raise FloatingPointError("non-finite influence bound")
    up_joint = np.full((t_joint.size, 1), 1.0 / t_joint.size)
    up_marg = -(w / w.sum())[:, None]
    grad = net.backward(joint_rows, up_joint)[0] + net.backward(marginal_rows, up_marg)[0]
    net.params = opt.step(net.params, -grad)  # ascend
    return bound


def uniform_action_source(intervention: InterventionPolicy):
    """Action source drawing from the intervention box; ignores the agent."""
    def source(rng, n, agent):
        return intervention.sample(rng, n)
    return source


def buffer_action_source(buffer):
    """Action source replaying stored behavior actions of `agent`.

    Swapping this in for the uniform source is the no-intervention ablation:
    the score degrades to an observational quantity tied to the behavior
    policy's action distribution.
    """
    def source(rng, n, agent):
        return buffer.sample_actions(agent, n, rng)
    return source


def train_statistic_step(stat: StatisticNetwork, model: PairDynamicsModel,
                         action_source, states, rng) -> float:
    """One ascent step for T on model-generated triples.

    Joint rows pair each conditioning state with an action and the model's
    sampled next state; marginal rows keep (state, next state) but swap in an
    independently drawn action. Returns the pre-step bound.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    n = states.shape[0]
    actions = action_source(rng, n, stat.source)
    nexts = model.sample_next(states, actions, rng)
    fresh = action_source(rng, n, stat.source)
    joint = stat.rows(states, actions, nexts)
    marginal = stat.rows(states, fresh, nexts)
    return dv_ascent_step(stat.net, stat.opt, joint, marginal)


def random_derangements(rng, rows: int, size: int) -> np.ndarray:
    """`rows` random permutations of range(size), each with no fixed point.

    Rejection-sampled from uniform random permutations, so every derangement
    is equally likely. Requires size >= 2.
    """
    if size < 2:
        raise ValueError("a derangement needs at least 2 elements")
    idx = np.arange(size)
    perms = np.argsort(rng.random((rows, size)), axis=1)
    bad = np.any(perms == idx, axis=1)
    while np.any(bad):
        perms[bad] = np.argsort(rng.random((int(bad.sum()), size)), axis=1)
        bad = np.any(perms == idx, axis=1)
    return perms


@dataclass
class InfluenceEstimate:
    """Score of one ordered pair at one conditioning state."""

    source: int
    target: int
    state: np.ndarray
    raw_value: float   # signed bound; negative values are estimator noise
    value: float       # max(raw_value, 0), what the reward uses


def estimate_influence_batch(stat: StatisticNetwork, model: PairDynamicsModel,
                             action_source, states, k: int, rng):
    """Influence of `stat.source` on `stat.target` at each state in `states`.

    For every conditioning state, draws `k` actions and one model next-state
    per action. Joint pairing keeps each action with its own next state;
    marginal pairing re-pairs them with a random derangement so no action
    meets its own outcome. Returns `(raw, value)` arrays of shape `(B,)`,
    with `value = max(raw, 0)`.
    """
    if k < 2:
        raise ValueError("need at least 2 action samples to form a derangement")
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    b = states.shape[0]
    actions = action_source(rng, b * k, stat.source)
    actions = np.asarray(actions, dtype=np.float64).reshape(b, k, -1)
    rep_states = np.repeat(states, k, axis=0)
    nexts = model.sample_next(rep_states, actions.reshape(b * k, -1), rng)
    joint = stat.rows(rep_states, actions.reshape(b * k, -1), nexts)
    t_joint = stat.net.forward(joint)[:, 0].reshape(b, k)
    perms = random_derangements(rng, b, k)
    shuffled = np.take_along_axis(actions, perms[:, :, None], axis=1)
    marginal = stat.rows(rep_states, shuffled.reshape(b * k, -1), nexts)
    t_marg = stat.net.forward(marginal)[:, 0].reshape(b, k)
    raw = t_joint.mean(axis=1) - logmeanexp(t_marg, axis=1)
    return raw, np.maximum(raw, 0.0)


def estimate_influence(source: int, target: int, state, stat: StatisticNetwork,
                       model: PairDynamicsModel, action_source, k: int,
                       rng) -> InfluenceEstimate:
    """Single-state convenience wrapper around `estimate_influence_batch`."""
    if (source, target) != (stat.source, stat.target):
        raise ValueError("statistic network belongs to a different pair")
    state = np.asarray(state, dtype=np.float64).ravel()
    raw, value = estimate_influence_batch(stat, model, action_source,
                                          state[None, :], k, rng)
    return InfluenceEstimate(source, target, state, float(raw[0]), float(value[0]))


@dataclass
class RewardBreakdown:
    """Extrinsic reward, per-target influence values, and their mixture."""

    extrinsic: float
    alpha: float
    influences: dict = field(default_factory=dict)  # target agent -> value
    aggregation: str = "sum"
    intrinsic: float = 0.0
    total: float = 0.0


def _aggregate(values, aggregation: str) -> float:
    if aggregation not in ("sum", "mean"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    if not values:
        return 0.0
    total = float(sum(values))
    return total / len(values) if aggregation == "mean" else total


def combine_reward(extrinsic: float, intrinsic: float, alpha: float,
                   influences=None, aggregation="sum") -> RewardBreakdown:
    """total = extrinsic + alpha * intrinsic, with the parts kept visible."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if intrinsic < 0:
        raise ValueError("intrinsic reward is clamped non-negative upstream")
    return RewardBreakdown(
        extrinsic=float(extrinsic), alpha=float(alpha),
        influences=dict(influences or {}), aggregation=aggregation,
        intrinsic=float(intrinsic),
        total=float(extrinsic) + float(alpha) * float(intrinsic))


def intrinsic_reward(agent: int, state, statistics: dict, models: dict,
                     action_source, k: int, rng, alpha: float = 1.0,
                     aggregation: str = "sum") -> RewardBreakdown:
    """Aggregate `agent`'s influence on every other agent at one state.

    `statistics` and `models` map ordered pairs (agent, target) to their
    StatisticNetwork / PairDynamicsModel. Extrinsic reward is 0 here; use
    `combine_reward` to fold the result into an environment reward.
    """
    values = {}
    for (i, j), stat in sorted(statistics.items()):
        if i != agent:
            continue
        est = estimate_influence(i, j, state, stat, models[(i, j)],
                                 action_source, k, rng)
        values[j] = est.value
    intrinsic = _aggregate(list(values.values()), aggregation)
    return combine_reward(0.0, intrinsic, alpha, influences=values,
                          aggregation=aggregation)


class CausalRewarder:
    """Per-ordered-pair dynamics models and statistic networks, wired into
    per-agent intrinsic rewards.

    One PairDynamicsModel and one StatisticNetwork exist for every ordered
    pair (i, j), i != j. `fit_step` regresses the dynamics on replay data,
    `statistic_step` pushes each T up its bound on model-generated triples,
    and `intrinsic_batch` turns influence values into per-agent rewards.
    """

    def __init__(self, obs_dims, action_dims, k: int,
                 intervention: InterventionPolicy, hidden=(64, 64),
                 dynamics_lr=1e-3, statistic_lr=1e-3, aggregation="sum",
                 rng=None):
        if k < 2:
            raise ValueError("need at least 2 action samples")
        if aggregation not in ("sum", "mean"):
            raise ValueError(f"unknown aggregation {aggregation!r}")
        self.n_agents = len(obs_dims)
        self.k = int(k)
        self.intervention = intervention
        self.aggregation = aggregation
        self.pairs = ordered_pairs(self.n_agents)
        self.models = {}
        self.statistics = {}
        for i, j in self.pairs:
            self.models[(i, j)] = PairDynamicsModel(
                i, j, obs_dims[i], action_dims[i], obs_dims[j], hidden=hidden,
                lr=dynamics_lr, rng=rng)
            self.statistics[(i, j)] = StatisticNetwork(
                i, j, obs_dims[i], action_dims[i], obs_dims[j], hidden=hidden,
                lr=statistic_lr, rng=rng)

    def fit_step(self, obs, actions, next_obs) -> dict:
        """One NLL step per pair model on a replay batch; returns losses."""
        losses = {}
        for i, j in self.pairs:
            losses[(i, j)] = self.models[(i, j)].nll_fit_step(
                obs[i], actions[i], next_obs[j])
        return losses

    def statistic_step(self, obs, action_source, rng) -> dict:
        """One ascent step per statistic network; returns pre-step bounds."""
        bounds = {}
        for i, j in self.pairs:
            bounds[(i, j)] = train_statistic_step(
                self.statistics[(i, j)], self.models[(i, j)], action_source,
                obs[i], rng)
        return bounds

    def intrinsic_batch(self, obs, action_source, rng):
        """Per-agent intrinsic rewards over a batch of observations.

        Returns `(rewards, pair_means)`: `rewards` has shape
        `(n_agents, B)` (aggregated, clamped, unscaled by alpha) and
        `pair_means` maps each ordered pair to its mean clamped value.
        """
        b = np.atleast_2d(obs[0]).shape[0]
        rewards = np.zeros((self.n_agents, b))
        pair_means = {}
        for i, j in self.pairs:
            _, value = estimate_influence_batch(
                self.statistics[(i, j)], self.models[(i, j)], action_source,
                obs[i], self.k, rng)
            rewards[i] += value
            pair_means[(i, j)] = float(value.mean())
        if self.aggregation == "mean" and self.n_agents > 1:
            rewards /= (self.n_agents - 1)
        return rewards, pair_means

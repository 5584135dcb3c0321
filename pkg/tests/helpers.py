"""Shared test utilities: a generic DV mutual-information fit used to
calibrate the bound against analytic Gaussian values, and hand-built exact
pair models for influence canaries."""

import math

import numpy as np

from cimarl.dynamics import PairDynamicsModel
from cimarl.influence import dv_ascent_step, dv_bound
from cimarl.nets import Adam, DenseNet


def gaussian_pairs(rng, rho, n):
    """n samples of a bivariate standard normal with correlation rho."""
    x = rng.standard_normal(n)
    y = rho * x + math.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
    return np.stack([x, y], axis=1)


def shuffle_second_column(rows, rng):
    marg = rows.copy()
    marg[:, 1] = rows[rng.permutation(rows.shape[0]), 1]
    return marg


def fit_dv_mi(rho, seed, steps=3000, batch=256, eval_batch=4096, eval_rounds=20):
    """Train a statistic net on correlated Gaussian pairs and return the
    averaged bound on fresh data. Ground truth is -0.5 * log(1 - rho^2)."""
    rng = np.random.default_rng(seed)
    net = DenseNet([2, 64, 64, 1], rng=rng)
    opt = Adam(net.param_count, lr=1e-3)
    for _ in range(steps):
        rows = gaussian_pairs(rng, rho, batch)
        dv_ascent_step(net, opt, rows, shuffle_second_column(rows, rng))
    vals = [dv_bound(net, rows, shuffle_second_column(rows, rng))
            for rows in (gaussian_pairs(rng, rho, eval_batch)
                         for _ in range(eval_rounds))]
    return float(np.mean(vals))


def exact_scalar_model(gain, sigma):
    """Pair model with exactly mean = gain * action, log_std = log sigma.

    Scalar state and action; the state input is ignored. With gain 0 the
    target is pure noise (no influence); with gain > 0 the true conditional
    mutual information is h(gain * U(-1,1) + N(0, sigma^2)) - h(N(0, sigma^2)).
    """
    m = PairDynamicsModel(0, 1, 1, 1, 1, hidden=())
    w = np.array([[0.0, 0.0], [gain, 0.0]])  # rows: state, action
    b = np.array([0.0, math.log(sigma)])
    m.net.params = np.concatenate([w.ravel(), b])
    return m


def collect_pair_transitions(variant, seed, episodes=400, horizon=5,
                             behavior="uniform"):
    """Roll out a two-agent synthetic chain and return (s0, a0, next s1).

    `behavior` "uniform" draws actions from the full box; "concentrated"
    draws a narrow clipped normal around 0.4, a deliberately low-entropy
    behavior policy for intervention-vs-replay comparisons.
    """
    from cimarl.env import TaskSpec, reset, step

    spec = TaskSpec(variant, 2, max_episode_length=horizon)
    rng = np.random.default_rng(seed)
    s0, a0, s1_next = [], [], []
    for _ in range(episodes):
        state, obs = reset(spec, rng)
        done = False
        while not done:
            if behavior == "uniform":
                acts = rng.uniform(-1, 1, (2, 1))
            else:
                acts = np.clip(0.4 + 0.15 * rng.standard_normal((2, 1)), -1, 1)
            result = step(state, acts, spec, rng)
            s0.append(obs[0].copy())
            a0.append(acts[0].copy())
            s1_next.append(result.observations[1].copy())
            obs = result.observations
            state = result.state
            done = result.done
    return np.array(s0), np.array(a0), np.array(s1_next)


def edge_detection_score(variant, seed, source_kind="intervention",
                         behavior="uniform", dyn_steps=1500, stat_steps=1500,
                         k=64):
    """Full influence pipeline on synthetic-chain data.

    Collects transitions at a short horizon (so the partner state stays
    tightly conditioned), fits the pair dynamics model, trains the statistic
    network with the chosen action source, and returns the mean clamped
    influence value over 200 buffered conditioning states.
    """
    from cimarl.dynamics import InterventionPolicy
    from cimarl.influence import (StatisticNetwork, estimate_influence_batch,
                                  train_statistic_step, uniform_action_source)

    s0, a0, s1_next = collect_pair_transitions(variant, seed, behavior=behavior)
    rng = np.random.default_rng(seed + 1000)
    model = PairDynamicsModel(0, 1, 1, 1, 1, rng=rng)
    stat = StatisticNetwork(0, 1, 1, 1, 1, rng=rng)
    n = len(s0)
    for _ in range(dyn_steps):
        idx = rng.integers(0, n, 256)
        model.nll_fit_step(s0[idx], a0[idx], s1_next[idx])
    if source_kind == "intervention":
        source = uniform_action_source(InterventionPolicy.symmetric(1))
    else:
        def source(r, count, agent):
            return a0[r.integers(0, n, count)]
    for _ in range(stat_steps):
        idx = rng.integers(0, n, 128)
        train_statistic_step(stat, model, source, s0[idx], rng)
    idx = rng.integers(0, n, 200)
    _, values = estimate_influence_batch(stat, model, source, s0[idx], k, rng)
    return float(values.mean())


def uniform_plus_noise_mi(gain, sigma):
    """Numerical h(gain * U(-1,1) + N(0, sigma^2)) - h(N(0, sigma^2)).

    The smoothed-uniform density is (Phi((x+g)/s) - Phi((x-g)/s)) / (2g);
    entropies by trapezoid quadrature on a wide grid.
    """
    if gain == 0.0:
        return 0.0
    xs = np.linspace(-gain - 8 * sigma, gain + 8 * sigma, 20001)
    z_hi = (xs + gain) / sigma
    z_lo = (xs - gain) / sigma
    phi = lambda z: 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2.0)))
    p = (phi(z_hi) - phi(z_lo)) / (2.0 * gain)
    p = np.maximum(p, 1e-300)
    h_mix = -np.trapezoid(p * np.log(p), xs)
    h_noise = 0.5 * math.log(2.0 * math.pi * math.e * sigma * sigma)
    return float(h_mix - h_noise)

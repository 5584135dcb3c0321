"""Experiment harness: seeded training runs, evaluation, the
no-intervention ablation, and the mixing-weight sweep.

Randomness discipline: one root seed spawns six named child streams (env,
explore, buffer, policy_init, causal_init, causal). The causal machinery
draws only from `causal_init`/`causal`, so a run with the intrinsic reward
disabled (alpha 0 or the plain baseline) consumes exactly the same draws
from the other four streams as a baseline run and produces bit-identical
trajectories and return columns. Checkpoints capture every parameter
vector, optimizer moment, buffer row, and generator state, so resuming
reproduces the uninterrupted run bit for bit (wall-clock `seconds` aside).
"""

from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import (ConfigError, TrainConfig, config_from_dict, config_to_dict,
                     config_to_text, task_spec_from_config, validate_config)
from .dynamics import InterventionPolicy
from .env import ParticleEnv
from .influence import (CausalRewarder, buffer_action_source, ordered_pairs,
                        uniform_action_source)
from .learner import MADDPG, ReplayBuffer, act, update_all
from .metrics import MetricsWriter, RunRecord
from .nets import DenseNet

__all__ = ["ALPHA_SWEEP", "STREAM_NAMES", "Trainer", "EvalResult",
           "run_training", "run_ablation_no_intervention", "run_alpha_sweep",
           "evaluate"]

log = logging.getLogger(__name__)

STREAM_NAMES = ("env", "explore", "buffer", "policy_init", "causal_init", "causal")
ALPHA_SWEEP = (0.0, 0.001, 0.01, 0.1, 0.5)


def make_streams(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(seq)
            for name, seq in zip(STREAM_NAMES, children)}


@dataclass
class EvalResult:
    mean: float
    std: float
    returns: list


class Trainer:
    """One seeded training run over a fixed episode budget."""

    def __init__(self, config: TrainConfig, resume_from=None):
        validate_config(config)
        if config.ablation == "alpha_sweep":
            raise ConfigError("alpha_sweep is a multi-run mode; call "
                              "run_alpha_sweep (CLI: the sweep command)")
        self.config = config
        self.spec = task_spec_from_config(config)
        self.streams = make_streams(config.seed)
        n = config.agents
        obs_dims = [self.spec.obs_dim] * n
        action_dims = [self.spec.action_dim] * n
        hidden = (config.hidden, config.hidden)
        self.learner = MADDPG(obs_dims, action_dims, gamma=config.gamma,
                              tau=config.tau, actor_lr=config.actor_lr,
                              critic_lr=config.critic_lr, hidden=hidden,
                              rng=self.streams["policy_init"])
        self.causal_enabled = config.algo == "causal" and config.alpha > 0.0
        if self.causal_enabled:
            self.rewarder = CausalRewarder(
                obs_dims, action_dims, k=config.mc_samples,
                intervention=InterventionPolicy.symmetric(self.spec.action_dim),
                hidden=hidden, dynamics_lr=config.dynamics_lr,
                statistic_lr=config.statistic_lr,
                aggregation=config.aggregation,
                rng=self.streams["causal_init"])
        else:
            self.rewarder = None
        self.buffer = ReplayBuffer(config.buffer_capacity, obs_dims, action_dims)
        self.env = ParticleEnv(self.spec, self.streams["env"])
        if config.ablation == "no_intervention":
            if not self.causal_enabled:
                log.warning("no_intervention ablation requested but the causal "
                            "machinery is disabled (algo=%s, alpha=%s); the "
                            "ablation changes nothing", config.algo, config.alpha)
            self.action_source = buffer_action_source(self.buffer)
        elif self.causal_enabled:
            self.action_source = uniform_action_source(self.rewarder.intervention)
        else:
            self.action_source = None
        self.start_episode = 0
        self.recent_returns = []
        if resume_from is not None:
            self._restore(load_checkpoint(resume_from))

    def noise_scale(self, episode: int) -> float:
        """Linear decay from noise_start to noise_end across the run."""
        cfg = self.config
        span = max(1, cfg.episodes - 1)
        frac = min(1.0, episode / span)
        return cfg.noise_start + (cfg.noise_end - cfg.noise_start) * frac

    def run(self) -> list:
        cfg = self.config
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, "config.txt"), "w", encoding="utf-8") as fh:
            fh.write(config_to_text(cfg))
        records = []
        writer = MetricsWriter(os.path.join(cfg.out, "metrics.csv"), cfg.agents)
        try:
            for ep in range(self.start_episode, cfg.episodes):
                t0 = time.perf_counter()
                record = self._episode(ep)
                record.seconds = time.perf_counter() - t0
                writer.write(record)
                records.append(record)
                if cfg.checkpoint_every and (ep + 1) % cfg.checkpoint_every == 0:
                    self.save(os.path.join(cfg.out, f"checkpoint_ep{ep + 1}.bin"),
                              ep + 1)
            self.save(os.path.join(cfg.out, "checkpoint.bin"), cfg.episodes)
        finally:
            writer.close()
        return records

    def _episode(self, ep: int) -> RunRecord:
        cfg = self.config
        noise = self.noise_scale(ep)
        obs = self.env.reset()
        ep_return = 0.0
        done = False
        while not done:
            actions = self.learner.act_all(obs, noise, self.streams["explore"])
            result = self.env.step(np.stack(actions))
            self.buffer.push(obs, actions, result.reward, result.observations,
                             result.done)
            obs = result.observations
            ep_return += result.reward
            done = result.done
        reports = []
        alpha = cfg.alpha if self.causal_enabled else 0.0
        for _ in range(cfg.updates_per_episode):
            report = update_all(self.learner, self.buffer, self.rewarder, alpha,
                                self.action_source, cfg.batch_size, cfg.warmup,
                                self.streams["buffer"], self.streams["causal"])
            if report is not None:
                reports.append(report)
        self.recent_returns.append(float(ep_return))
        if len(self.recent_returns) > 100:
            self.recent_returns.pop(0)
        pairs = ordered_pairs(cfg.agents)
        if reports:
            intrinsic = tuple(float(v) for v in
                              np.mean([r.intrinsic_mean for r in reports], axis=0))
            pair_vals = tuple(float(np.mean([r.pair_influence.get(p, 0.0)
                                             for r in reports])) for p in pairs)
        else:
            intrinsic = (0.0,) * cfg.agents
            pair_vals = (0.0,) * len(pairs)
        return RunRecord(episode=ep, return_mean=float(ep_return),
                         return_trailing100=float(np.mean(self.recent_returns)),
                         intrinsic_mean=intrinsic, pair_influence=pair_vals,
                         seconds=0.0)

    # -- checkpointing ----------------------------------------------------

    def _named_nets(self) -> dict:
        """name -> (net, optimizer or None); targets carry no optimizer."""
        named = {}
        for i, agent in enumerate(self.learner.agents):
            named[f"agent{i}_actor"] = (agent.actor, agent.actor_opt)
            named[f"agent{i}_critic"] = (agent.critic, agent.critic_opt)
            named[f"agent{i}_actor_target"] = (agent.actor_target, None)
            named[f"agent{i}_critic_target"] = (agent.critic_target, None)
        if self.rewarder is not None:
            for (i, j) in self.rewarder.pairs:
                model = self.rewarder.models[(i, j)]
                stat = self.rewarder.statistics[(i, j)]
                named[f"pair{i}_{j}_dynamics"] = (model.net, model.opt)
                named[f"pair{i}_{j}_statistic"] = (stat.net, stat.opt)
        return named

    def save(self, path: str, next_episode: int):
        arrays = {}
        opt_steps = {}
        for name, (net, opt) in self._named_nets().items():
            arrays[name] = net.params
            if opt is not None:
                arrays[f"{name}_opt_m"] = opt.m
                arrays[f"{name}_opt_v"] = opt.v
                opt_steps[name] = opt.t
        size = self.buffer.size
        for key, arr in self.buffer.state_arrays().items():
            arrays[f"buffer_{key}"] = arr[:size]
        scalars = {
            "next_episode": int(next_episode),
            "buffer_size": int(size),
            "buffer_cursor": int(self.buffer.cursor),
            "recent_returns": list(self.recent_returns),
            "opt_steps": opt_steps,
            "causal_enabled": bool(self.causal_enabled),
        }
        rng_states = {name: gen.bit_generator.state
                      for name, gen in self.streams.items()}
        save_checkpoint(path, Checkpoint(config=config_to_dict(self.config),
                                         rng_states=rng_states,
                                         scalars=scalars, arrays=arrays))

    def _restore(self, ckpt: Checkpoint):
        cfg = self.config
        saved = ckpt.config
        for key in ("task", "agents", "algo", "hidden", "aggregation"):
            if saved.get(key) != getattr(cfg, key):
                raise CheckpointError(
                    f"checkpoint {key}={saved.get(key)!r} does not match "
                    f"current config {key}={getattr(cfg, key)!r}")
        if bool(ckpt.scalars.get("causal_enabled")) != self.causal_enabled:
            raise CheckpointError("checkpoint and config disagree on whether "
                                  "the causal machinery is active")
        size = int(ckpt.scalars["buffer_size"])
        if size > self.buffer.capacity:
            raise CheckpointError("checkpointed buffer exceeds configured capacity")
        for name, (net, opt) in self._named_nets().items():
            if name not in ckpt.arrays:
                raise CheckpointError(f"checkpoint missing array {name!r}")
            params = ckpt.arrays[name]
            if params.size != net.param_count:
                raise CheckpointError(f"array {name!r} has {params.size} values, "
                                      f"expected {net.param_count}")
            net.params = params.astype(np.float64).copy()
            if opt is not None:
                opt.m = ckpt.arrays[f"{name}_opt_m"].astype(np.float64).copy()
                opt.v = ckpt.arrays[f"{name}_opt_v"].astype(np.float64).copy()
                opt.t = int(ckpt.scalars["opt_steps"][name])
        stored = self.buffer.state_arrays()
        for key, arr in stored.items():
            saved_arr = ckpt.arrays.get(f"buffer_{key}")
            if saved_arr is None or saved_arr.shape[1:] != arr.shape[1:] \
                    or saved_arr.shape[0] != size:
                raise CheckpointError(f"buffer array {key!r} missing or misshaped")
            arr[:size] = saved_arr
        self.buffer.size = size
        self.buffer.cursor = int(ckpt.scalars["buffer_cursor"])
        for name in STREAM_NAMES:
            if name not in ckpt.rng_states:
                raise CheckpointError(f"checkpoint missing rng stream {name!r}")
            self.streams[name].bit_generator.state = ckpt.rng_states[name]
        self.recent_returns = [float(v) for v in ckpt.scalars["recent_returns"]]
        self.start_episode = int(ckpt.scalars["next_episode"])


def run_training(config: TrainConfig, resume_from=None) -> list:
    """Train under `config`; returns the per-episode records.

    Writes `metrics.csv`, `config.txt`, and a final `checkpoint.bin` into
    `config.out` (plus `checkpoint_ep<N>.bin` every `checkpoint_every`
    episodes when that is set).
    """
    return Trainer(config, resume_from=resume_from).run()


def run_ablation_no_intervention(config: TrainConfig) -> list:
    """The same run with buffer-replayed actions in place of intervention
    draws, for both statistic training and influence scoring."""
    return run_training(replace(config, ablation="no_intervention"))


def run_alpha_sweep(config: TrainConfig) -> list:
    """Train one arm per mixing weight in ALPHA_SWEEP, all on the same seed.

    Returns summary rows sorted by final-100-episode mean return
    (descending) and writes them to `<out>/summary.csv`. The alpha-0 arm is
    bit-identical to a plain baseline run at the same seed.
    """
    rows = []
    for alpha in ALPHA_SWEEP:
        arm = replace(config, alpha=alpha, ablation="none",
                      out=os.path.join(config.out, f"alpha_{alpha:g}"))
        records = Trainer(arm).run()
        window = [r.return_mean for r in records[-100:]]
        rows.append({"alpha": alpha, "final100_mean": float(np.mean(window)),
                     "episodes": len(records), "run_dir": arm.out})
    rows.sort(key=lambda r: r["final100_mean"], reverse=True)
    os.makedirs(config.out, exist_ok=True)
    with open(os.path.join(config.out, "summary.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "alpha", "final100_mean", "episodes", "run_dir"])
        for rank, row in enumerate(rows, start=1):
            writer.writerow([rank, repr(float(row["alpha"])),
                             repr(row["final100_mean"]), row["episodes"],
                             row["run_dir"]])
    return rows


def evaluate(checkpoint_path: str, episodes: int, seed: int = 0) -> EvalResult:
    """Noise-free rollouts of checkpointed actors; extrinsic returns only."""
    if episodes <= 0:
        raise ValueError("evaluation needs a positive episode count")
    ckpt = load_checkpoint(checkpoint_path)
    cfg = config_from_dict(ckpt.config)
    spec = task_spec_from_config(cfg)
    hidden = (cfg.hidden, cfg.hidden)
    actors = []
    for i in range(cfg.agents):
        key = f"agent{i}_actor"
        if key not in ckpt.arrays:
            raise CheckpointError(f"checkpoint has no actor for agent {i}")
        try:
            net = DenseNet([spec.obs_dim, *hidden, spec.action_dim],
                           output_activation="tanh", params=ckpt.arrays[key])
        except ValueError as exc:
            raise CheckpointError(f"bad actor parameters: {exc}") from None
        actors.append(net)
    env = ParticleEnv(spec, np.random.default_rng(seed))
    returns = []
    for _ in range(int(episodes)):
        obs = env.reset()
        total = 0.0
        done = False
        while not done:
            actions = [act(actors[i], obs[i], 0.0) for i in range(cfg.agents)]
            result = env.step(np.stack(actions))
            total += result.reward
            obs = result.observations
            done = result.done
        returns.append(float(total))
    return EvalResult(float(np.mean(returns)), float(np.std(returns)), returns)

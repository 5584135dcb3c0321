"""Run configuration: one flat dataclass, a `key = value` file format, and
strict validation. Command-line flags override file values, which override
the built-in defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .env import TASK_VARIANTS, TaskSpec

__all__ = ["ConfigError", "TrainConfig", "validate_config", "load_config_file",
           "make_config", "config_to_dict", "config_from_dict", "config_to_text",
           "task_spec_from_config", "ALGOS", "ABLATIONS", "AGGREGATIONS"]

ALGOS = ("causal", "maddpg")
ABLATIONS = ("none", "no_intervention", "alpha_sweep")
AGGREGATIONS = ("sum", "mean")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class TrainConfig:
    """Everything that defines a training run.

    `algo` selects between the full method ("causal": influence-based
    intrinsic rewards added to the critic target) and the plain baseline
    ("maddpg"). `alpha` is the intrinsic mixing weight; alpha 0 disables the
    causal machinery entirely, making the run bit-identical to the baseline.
    `mc_samples` is the number of intervention-action draws per influence
    estimate. `ablation` "no_intervention" replaces the uniform intervention
    actions with actions replayed from the buffer.
    """

    task: str = "cooperative_navigation"
    agents: int = 3
    algo: str = "causal"
    alpha: float = 0.01
    gamma: float = 0.95
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    dynamics_lr: float = 1e-3
    statistic_lr: float = 1e-3
    mc_samples: int = 64
    episodes: int = 2000
    max_steps: int = 25
    seed: int = 0
    ablation: str = "none"
    aggregation: str = "sum"
    out: str = "runs/latest"
    buffer_capacity: int = 100000
    batch_size: int = 256
    warmup: int = 1024
    updates_per_episode: int = 1
    tau: float = 0.01
    hidden: int = 64
    noise_start: float = 0.3
    noise_end: float = 0.05
    checkpoint_every: int = 0   # 0: only at the end of the run


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def validate_config(cfg: TrainConfig) -> TrainConfig:
    if cfg.task not in TASK_VARIANTS:
        raise ConfigError(f"unknown task {cfg.task!r}; choose from {TASK_VARIANTS}")
    if cfg.algo not in ALGOS:
        raise ConfigError(f"unknown algo {cfg.algo!r}; choose from {ALGOS}")
    if cfg.ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation {cfg.ablation!r}; choose from {ABLATIONS}")
    if cfg.aggregation not in AGGREGATIONS:
        raise ConfigError(f"unknown aggregation {cfg.aggregation!r}")
    if cfg.alpha < 0:
        raise ConfigError("alpha must be non-negative")
    if not 0.0 <= cfg.gamma <= 1.0:
        raise ConfigError("gamma must lie in [0, 1]")
    for name in ("actor_lr", "critic_lr", "dynamics_lr", "statistic_lr", "tau"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be non-negative")
    if cfg.tau > 1.0:
        raise ConfigError("tau must lie in [0, 1]")
    if cfg.mc_samples < 2:
        raise ConfigError("mc_samples must be at least 2 (shuffle needs pairs)")
    for name in ("episodes", "max_steps", "buffer_capacity", "batch_size",
                 "hidden", "updates_per_episode"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.warmup < 0 or cfg.checkpoint_every < 0:
        raise ConfigError("warmup and checkpoint_every must be non-negative")
    if cfg.noise_start < 0 or cfg.noise_end < 0:
        raise ConfigError("noise scales must be non-negative")
    try:
        task_spec_from_config(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def task_spec_from_config(cfg: TrainConfig) -> TaskSpec:
    return TaskSpec(cfg.task, cfg.agents, max_episode_length=cfg.max_steps)


def _coerce(name: str, raw):
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    kind = _FIELD_TYPES[name]
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if kind == "int" or kind is int:
            value = int(str(raw), 0)
        elif kind == "float" or kind is float:
            value = float(raw)
        else:
            value = str(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {name} = {raw!r}") from None
    return value


def load_config_file(path: str) -> dict:
    """Parse a flat `key = value` file; `#` starts a comment."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, raw = text.partition("=")
            key = key.strip()
            values[key] = _coerce(key, raw)
    return values


def make_config(file_values=None, **overrides) -> TrainConfig:
    """Defaults <- file values <- explicit overrides, then validate."""
    merged = {}
    for source in (file_values or {}), overrides:
        for key, value in source.items():
            if value is None:
                continue
            merged[key] = _coerce(key, value)
    return validate_config(TrainConfig(**merged))


def config_to_dict(cfg: TrainConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(values: dict) -> TrainConfig:
    return validate_config(TrainConfig(**{k: _coerce(k, v)
                                          for k, v in values.items()}))


def config_to_text(cfg: TrainConfig) -> str:
    """Echo a config as a reusable `key = value` file."""
    lines = [f"{f.name} = {getattr(cfg, f.name)}"
             for f in dataclasses.fields(TrainConfig)]
    return "\n".join(lines) + "\n"

"""2D particle world with cooperative benchmark tasks plus two synthetic
two-agent chains whose cause-effect structure is known by construction.

Task variants (all share one step contract):

* ``predator_prey``: 3 to 5 learning predators chase one scripted prey.
* ``cooperative_navigation``: n agents cover n landmarks while avoiding
  collisions.
* ``cooperative_line``: n agents (3 or 5) spread over n evenly spaced points
  on the segment between two landmark targets.
* ``synthetic_coupled`` / ``synthetic_decoupled``: two agents with scalar
  states and actions. Agent 0 drives its own next state in both variants;
  only in the coupled variant does its action also shift agent 1's next
  state. Agent 1's own transition is identical across the two variants, so
  any influence detector that separates them is responding to the single
  differing edge (agent 0's action into agent 1's state).

Particle agents follow a damped double integrator: velocity decays by the
damping factor, gains force times dt, is clipped to the speed limit, and
then integrates into position over dt. Episodes run for a fixed number of
steps; `done` only marks the horizon. All arithmetic is float64 and every
random draw comes from a caller-supplied generator, so trajectories are
bitwise reproducible.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TASK_VARIANTS", "TaskSpec", "WorldState", "StepResult", "ParticleEnv",
    "reset", "observe", "step", "task_reward", "prey_policy", "synthetic_step",
]

PREDATOR_PREY = "predator_prey"
COOPERATIVE_NAVIGATION = "cooperative_navigation"
COOPERATIVE_LINE = "cooperative_line"
SYNTHETIC_COUPLED = "synthetic_coupled"
SYNTHETIC_DECOUPLED = "synthetic_decoupled"

TASK_VARIANTS = (
    PREDATOR_PREY, COOPERATIVE_NAVIGATION, COOPERATIVE_LINE,
    SYNTHETIC_COUPLED, SYNTHETIC_DECOUPLED,
)
_SYNTHETIC = (SYNTHETIC_COUPLED, SYNTHETIC_DECOUPLED)

_AGENT_COUNTS = {
    PREDATOR_PREY: (3, 4, 5),
    COOPERATIVE_NAVIGATION: (3, 4, 5),
    COOPERATIVE_LINE: (3, 5),
    SYNTHETIC_COUPLED: (2,),
    SYNTHETIC_DECOUPLED: (2,),
}

# Synthetic chain constants: s0' = s0 + COUPLING * a0 + eps, and in the
# coupled variant s1' = s1 + COUPLING * a0 + eps (no a0 term when decoupled).
SYNTHETIC_COUPLING = 0.5
SYNTHETIC_NOISE_STD = 0.1


@dataclass(frozen=True)
class TaskSpec:
    """Immutable description of a task instance and its physics constants."""

    variant: str
    n_agents: int
    dt: float = 0.1
    damping: float = 0.25
    max_speed: float = 1.0
    prey_max_speed: float = 1.3
    contact_radius: float = 0.15
    arena_halfwidth: float = 1.0
    max_episode_length: int = 25
    synthetic_origins: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.variant not in TASK_VARIANTS:
            raise ValueError(f"unknown task variant {self.variant!r}")
        if self.n_agents not in _AGENT_COUNTS[self.variant]:
            raise ValueError(
                f"{self.variant} supports agent counts {_AGENT_COUNTS[self.variant]}, "
                f"got {self.n_agents}")
        if self.dt <= 0 or self.max_speed <= 0 or self.prey_max_speed <= 0:
            raise ValueError("dt and speed limits must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.max_episode_length <= 0:
            raise ValueError("max_episode_length must be positive")
        if len(self.synthetic_origins) != 2:
            raise ValueError("synthetic_origins needs one origin per agent")

    @property
    def is_synthetic(self) -> bool:
        return self.variant in _SYNTHETIC

    @property
    def n_landmarks(self) -> int:
        if self.variant == COOPERATIVE_NAVIGATION:
            return self.n_agents
        if self.variant == COOPERATIVE_LINE:
            return 2
        return 0

    @property
    def n_prey(self) -> int:
        return 1 if self.variant == PREDATOR_PREY else 0

    @property
    def state_dim(self) -> int:
        return 1 if self.is_synthetic else 2

    @property
    def action_dim(self) -> int:
        return 1 if self.is_synthetic else 2

    @property
    def obs_dim(self) -> int:
        if self.is_synthetic:
            return 1
        return (2 + 2 + 2 * self.n_landmarks + 2 * (self.n_agents - 1)
                + 2 * self.n_prey)


@dataclass
class WorldState:
    """Complete physical state; everything needed to continue an episode."""

    agent_pos: np.ndarray
    agent_vel: np.ndarray
    landmark_pos: np.ndarray
    prey_pos: np.ndarray
    prey_vel: np.ndarray
    step_index: int = 0

    def copy(self) -> "WorldState":
        return WorldState(self.agent_pos.copy(), self.agent_vel.copy(),
                          self.landmark_pos.copy(), self.prey_pos.copy(),
                          self.prey_vel.copy(), self.step_index)


@dataclass
class StepResult:
    state: WorldState
    observations: list
    reward: float
    done: bool


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def reset(spec: TaskSpec, seed) -> tuple:
    """Draw a fresh initial state; returns `(state, observations)`.

    Particle tasks place agents, landmarks, and prey uniformly in the arena
    (in that draw order) with zero velocities. Synthetic tasks start both
    scalar states at their configured fixed origins without consuming any
    randomness.
    """
    rng = _as_rng(seed)
    if spec.is_synthetic:
        pos = np.array(spec.synthetic_origins, dtype=np.float64).reshape(2, 1)
        state = WorldState(pos, np.zeros((2, 1)), np.zeros((0, 2)),
                           np.zeros((0, 2)), np.zeros((0, 2)), 0)
        return state, observe(state, spec)
    hw = spec.arena_halfwidth
    agent_pos = rng.uniform(-hw, hw, size=(spec.n_agents, 2))
    landmark_pos = rng.uniform(-hw, hw, size=(spec.n_landmarks, 2))
    prey_pos = rng.uniform(-hw, hw, size=(spec.n_prey, 2))
    state = WorldState(agent_pos, np.zeros((spec.n_agents, 2)), landmark_pos,
                       prey_pos, np.zeros((spec.n_prey, 2)), 0)
    return state, observe(state, spec)


def observe(state: WorldState, spec: TaskSpec) -> list:
    """Per-agent observation vectors.

    Particle layout: own velocity, own position, landmark offsets, other
    agents' offsets, prey offsets (each offset is the entity position minus
    the observer's position). Synthetic layout: the scalar own state.
    """
    if spec.is_synthetic:
        return [state.agent_pos[i].copy() for i in range(spec.n_agents)]
    obs = []
    for i in range(spec.n_agents):
        me = state.agent_pos[i]
        parts = [state.agent_vel[i], me]
        if spec.n_landmarks:
            parts.append((state.landmark_pos - me).ravel())
        others = [state.agent_pos[j] - me for j in range(spec.n_agents) if j != i]
        if others:
            parts.append(np.concatenate(others))
        if spec.n_prey:
            parts.append((state.prey_pos - me).ravel())
        obs.append(np.concatenate(parts))
    return obs


def _validate_action(action, spec: TaskSpec) -> np.ndarray:
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (spec.n_agents, spec.action_dim):
        raise ValueError(
            f"expected joint action shape {(spec.n_agents, spec.action_dim)}, "
            f"got {action.shape}")
    if not np.all(np.isfinite(action)):
        raise FloatingPointError("non-finite action")
    return np.clip(action, -1.0, 1.0)


def _speed_clip(vel: np.ndarray, cap: float) -> np.ndarray:
    speed = np.linalg.norm(vel, axis=1, keepdims=True)
    scale = np.minimum(1.0, cap / np.maximum(speed, 1e-12))
    return vel * scale


def step(state: WorldState, action, spec: TaskSpec, rng=None) -> StepResult:
    """Advance one step. `action` stacks per-agent forces, shape
    `(n_agents, action_dim)`; components are clipped to [-1, 1].

    `rng` is required for the synthetic variants (transition noise) and
    unused elsewhere. The reward is evaluated on the post-step state.
    """
    action = _validate_action(action, spec)
    if spec.is_synthetic:
        if rng is None:
            raise ValueError("synthetic variants need an rng for transition noise")
        return synthetic_step(state, action, spec, rng)

    vel = state.agent_vel * (1.0 - spec.damping) + action * spec.dt
    vel = _speed_clip(vel, spec.max_speed)
    pos = state.agent_pos + vel * spec.dt

    if spec.n_prey:
        flee = prey_policy(state, spec)
        prey_vel = state.prey_vel * (1.0 - spec.damping) + flee * spec.dt
        prey_vel = _speed_clip(prey_vel, spec.prey_max_speed)
        prey_pos = state.prey_pos + prey_vel * spec.dt
    else:
        prey_pos = state.prey_pos.copy()
        prey_vel = state.prey_vel.copy()

    nxt = WorldState(pos, vel, state.landmark_pos.copy(), prey_pos, prey_vel,
                     state.step_index + 1)
    reward = task_reward(state, nxt, spec)
    done = nxt.step_index >= spec.max_episode_length
    return StepResult(nxt, observe(nxt, spec), reward, done)


def synthetic_step(state: WorldState, action, spec: TaskSpec, rng) -> StepResult:
    """Scalar chain transition with N(0, SYNTHETIC_NOISE_STD^2) noise.

    Both variants consume exactly two normal draws per step (one per agent)
    so their random streams stay aligned. Extrinsic reward is identically 0;
    these tasks exist purely to exercise influence detection.
    """
    action = _validate_action(action, spec)
    noise = rng.normal(0.0, SYNTHETIC_NOISE_STD, size=2)
    s = state.agent_pos[:, 0]
    a0 = action[0, 0]
    s0_next = s[0] + SYNTHETIC_COUPLING * a0 + noise[0]
    coupling = SYNTHETIC_COUPLING * a0 if spec.variant == SYNTHETIC_COUPLED else 0.0
    s1_next = s[1] + coupling + noise[1]
    pos = np.array([[s0_next], [s1_next]])
    nxt = WorldState(pos, np.zeros((2, 1)), np.zeros((0, 2)), np.zeros((0, 2)),
                     np.zeros((0, 2)), state.step_index + 1)
    done = nxt.step_index >= spec.max_episode_length
    return StepResult(nxt, observe(nxt, spec), 0.0, done)


def task_reward(state: WorldState, next_state: WorldState, spec: TaskSpec) -> float:
    """Shared team reward, evaluated on the post-step state.

    These formulas are the frozen definitions for this package; scores are
    comparable only against runs produced by the same formulas.

    * predator_prey: ``10 * (# predators within contact_radius of the prey)
      - mean predator-prey distance``.
    * cooperative_navigation: ``-(sum over landmarks of the nearest-agent
      distance) - (# distinct agent pairs closer than contact_radius)``.
    * cooperative_line: ``-(minimum over agent-to-point assignments of the
      total distance to the n evenly spaced points between the two
      landmarks)``, endpoints included.
    * synthetic variants: constant 0.
    """
    if spec.is_synthetic:
        return 0.0
    pos = next_state.agent_pos
    if spec.variant == PREDATOR_PREY:
        d = np.linalg.norm(pos - next_state.prey_pos[0], axis=1)
        return float(10.0 * np.sum(d < spec.contact_radius) - d.mean())
    if spec.variant == COOPERATIVE_NAVIGATION:
        diffs = pos[None, :, :] - next_state.landmark_pos[:, None, :]
        nearest = np.linalg.norm(diffs, axis=2).min(axis=1)
        collisions = 0
        for i in range(spec.n_agents):
            for j in range(i + 1, spec.n_agents):
                if np.linalg.norm(pos[i] - pos[j]) < spec.contact_radius:
                    collisions += 1
        return float(-nearest.sum() - collisions)
    if spec.variant == COOPERATIVE_LINE:
        a, b = next_state.landmark_pos[0], next_state.landmark_pos[1]
        ts = np.linspace(0.0, 1.0, spec.n_agents)[:, None]
        points = a[None, :] * (1.0 - ts) + b[None, :] * ts
        cost = np.linalg.norm(pos[:, None, :] - points[None, :, :], axis=2)
        best = min(sum(cost[k, p[k]] for k in range(spec.n_agents))
                   for p in itertools.permutations(range(spec.n_agents)))
        return float(-best)
    raise ValueError(f"no reward defined for {spec.variant!r}")


def prey_policy(state: WorldState, spec: TaskSpec) -> np.ndarray:
    """Scripted flee force for each prey, shape `(n_prey, 2)`.

    Unit force pointing away from the nearest predator, ties broken by the
    lowest predator index; a degenerate zero offset falls back to +x. At the
    arena boundary the outward force component is zeroed so the prey cannot
    be pushed out.
    """
    if spec.variant != PREDATOR_PREY:
        raise ValueError("prey_policy is only defined for predator_prey")
    hw = spec.arena_halfwidth
    forces = np.zeros((spec.n_prey, 2))
    for p in range(spec.n_prey):
        prey = state.prey_pos[p]
        dists = np.linalg.norm(state.agent_pos - prey, axis=1)
        nearest = int(np.argmin(dists))
        offset = prey - state.agent_pos[nearest]
        norm = np.linalg.norm(offset)
        force = offset / norm if norm > 0 else np.array([1.0, 0.0])
        for axis in range(2):
            if prey[axis] >= hw and force[axis] > 0:
                force[axis] = 0.0
            elif prey[axis] <= -hw and force[axis] < 0:
                force[axis] = 0.0
        forces[p] = force
    return forces


class ParticleEnv:
    """Stateful convenience wrapper tying a TaskSpec to one generator."""

    def __init__(self, spec: TaskSpec, rng):
        self.spec = spec
        self.rng = _as_rng(rng)
        self.state = None

    def reset(self) -> list:
        self.state, obs = reset(self.spec, self.rng)
        return obs

    def step(self, action) -> StepResult:
        if self.state is None:
            raise RuntimeError("step() before reset()")
        result = step(self.state, action, self.spec, self.rng)
        self.state = result.state
        return result

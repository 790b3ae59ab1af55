"""Desk-scale continuous-control tasks.

Two tasks stand in for the robot-locomotion benchmarks:

* ``pointmass`` - a damped 2-D point mass that must be driven to a goal.
  Observation ``(x, y, vx, vy)``, action a force in ``[-1, 1]^2``.
* ``pendulum`` - torque-limited pendulum swing-up. Observation
  ``(cos th, sin th, th_dot)``, action a torque in ``[-2, 2]``; ``th = 0`` is
  upright.

Both integrate with semi-implicit Euler at ``dt = 0.05`` and are cut off at
200 steps. Dynamics are deterministic; randomness enters only through the
reset distribution. Neither task has true terminal states, so every episode
ends by horizon cut-off (``truncated``), never ``terminated``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

DT = 0.05


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_low: tuple[float, ...]
    action_high: tuple[float, ...]
    horizon: int = 200
    gamma: float = 0.99

    def __post_init__(self):
        if self.state_dim < 1 or self.action_dim < 1 or self.horizon < 1:
            raise ConfigError("environment dimensions and horizon must be >= 1")
        if len(self.action_low) != self.action_dim or len(self.action_high) != self.action_dim:
            raise ConfigError("action bounds must have one entry per action dimension")
        if any(lo >= hi for lo, hi in zip(self.action_low, self.action_high)):
            raise ConfigError("action bounds need lower < upper")

    def clamp(self, action) -> np.ndarray:
        return np.clip(np.asarray(action, dtype=np.float64).reshape(self.action_dim),
                       self.action_low, self.action_high)


@dataclass(frozen=True)
class EnvState:
    spec: EnvSpec
    physical: np.ndarray  # pointmass: (x, y, vx, vy); pendulum: (theta, theta_dot)
    steps: int = 0
    terminated: bool = False
    truncated: bool = False

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


POINTMASS = EnvSpec("pointmass", 4, 2, (-1.0, -1.0), (1.0, 1.0))
PENDULUM = EnvSpec("pendulum", 3, 1, (-2.0,), (2.0,))

ENVIRONMENTS = {"pointmass": POINTMASS, "pendulum": PENDULUM}

# point mass
GOAL = np.zeros(2)
START_BOX = 1.0       # initial position uniform in [-1, 1]^2, initial velocity zero
ACTION_COST = 0.01
PM_MASS = 0.02
PM_DAMPING = 5.0      # viscous drag per second; terminal speed |a| / (mass * drag)

# pendulum
GRAVITY = 10.0
LENGTH = 1.0
MASS = 1.0
MAX_SPEED = 8.0
INIT_SPEED = 1.0      # initial angular velocity uniform in [-1, 1]


def make_env(name: str, horizon: int | None = None) -> EnvSpec:
    try:
        spec = ENVIRONMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; expected one of "
                          f"{sorted(ENVIRONMENTS)}") from None
    return spec if horizon is None else replace(spec, horizon=int(horizon))


def angle_normalize(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def observe(state: EnvState) -> np.ndarray:
    p = state.physical
    if state.spec.name == "pointmass":
        return p.copy()
    return np.array([math.cos(p[0]), math.sin(p[0]), p[1]])


def env_reset(spec: EnvSpec, rng: np.random.Generator) -> tuple[EnvState, np.ndarray]:
    if spec.name == "pointmass":
        pos = rng.uniform(-START_BOX, START_BOX, size=2)
        physical = np.concatenate([pos, np.zeros(2)])
    elif spec.name == "pendulum":
        # uniform on [-pi, pi) mapped to (-pi, pi]
        theta = -rng.uniform(-math.pi, math.pi)
        physical = np.array([theta, rng.uniform(-INIT_SPEED, INIT_SPEED)])
    else:
        raise ConfigError(f"unknown environment {spec.name!r}")
    state = EnvState(spec, physical)
    return state, observe(state)


def _pointmass_step(p: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, float]:
    reward = -float(np.sum((p[:2] - GOAL) ** 2)) - ACTION_COST * float(a @ a)
    vel = p[2:] + DT * (a / PM_MASS - PM_DAMPING * p[2:])
    pos = p[:2] + DT * vel
    return np.concatenate([pos, vel]), reward


def _pendulum_step(p: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, float]:
    theta, theta_dot = float(p[0]), float(p[1])
    u = float(a[0])
    reward = -(angle_normalize(theta) ** 2 + 0.1 * theta_dot ** 2 + 0.001 * u ** 2)
    theta_dot = theta_dot + DT * (3.0 * GRAVITY / (2.0 * LENGTH) * math.sin(theta)
                                  + 3.0 / (MASS * LENGTH ** 2) * u)
    theta_dot = min(max(theta_dot, -MAX_SPEED), MAX_SPEED)
    theta = angle_normalize(theta + DT * theta_dot)
    return np.array([theta, theta_dot]), reward


def env_step(state: EnvState, action) -> tuple[EnvState, np.ndarray, float, bool]:
    """Advance one step with the clamped action.

    The reward is the task's true reward for ``(s, a)``; it must only be
    consumed by expert generation, the PPO baseline, and evaluation.
    """
    if state.done:
        raise RuntimeError("env_step called on a finished episode; reset first")
    a = state.spec.clamp(action)
    if state.spec.name == "pointmass":
        physical, reward = _pointmass_step(state.physical, a)
    else:
        physical, reward = _pendulum_step(state.physical, a)
    steps = state.steps + 1
    nxt = EnvState(state.spec, physical, steps, terminated=False,
                   truncated=steps >= state.spec.horizon)
    return nxt, observe(nxt), reward, nxt.done


def true_return(rewards, gamma: float = 1.0) -> float:
    """Sum of rewards of a finished episode, discounted from t = 0 when ``gamma < 1``."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        raise ValueError("cannot compute the return of an empty trajectory")
    if gamma == 1.0:
        return float(rewards.sum())
    return float(np.sum(rewards * gamma ** np.arange(rewards.size)))

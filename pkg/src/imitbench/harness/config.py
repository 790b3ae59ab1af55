"""Run configuration: defaults, search spaces, and the flat ``key = value`` file format."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..rl import PpoConfig

RUN_ALGORITHMS = ("bc", "gail", "airl", "fairl", "gmmil", "red", "dril", "ppo")

# categorical search spaces and continuous log-uniform ranges
CHOICES = {
    "rollout_length": (1024, 2048, 4096),
    "ppo_iterations": (5, 10, 20),
    "entropy_coef": (0.0, 1e-3, 1e-2),
    "imitation_epochs": (5, 15, 25),
    "adversarial_epochs": (5, 15, 25),
    "replay_multiplier": (1, 3, 5),
    "r1_coef": (0.1, 0.5, 1.0),
    "gmmil_self_similarity": (True, False),
}
RANGES = {
    "agent_lr": (3e-5, 3e-4),
    "imitation_lr": (3e-5, 3e-4),
}
FIXED = {
    "gamma": 0.99,
    "gae_lambda": 0.9,
    "max_grad_norm": 0.5,
    "ppo_clip": 0.25,
    "value_coef": 0.5,
    "hidden_layers": 2,
    "hidden_size": 256,
    "log_std_init": -2.0,
}

PPO_KEYS = ("agent_lr", "rollout_length", "ppo_iterations", "entropy_coef")
SEARCH_KEYS = {
    "ppo": PPO_KEYS,
    "bc": ("agent_lr", "imitation_epochs"),
    "gail": PPO_KEYS + ("imitation_lr", "adversarial_epochs", "replay_multiplier", "r1_coef"),
    "airl": PPO_KEYS + ("imitation_lr", "adversarial_epochs", "replay_multiplier", "r1_coef"),
    "fairl": PPO_KEYS + ("imitation_lr", "adversarial_epochs", "replay_multiplier", "r1_coef"),
    "gmmil": PPO_KEYS + ("gmmil_self_similarity",),
    "red": PPO_KEYS + ("imitation_lr", "imitation_epochs"),
    "dril": PPO_KEYS + ("imitation_lr", "imitation_epochs"),
}


@dataclass(frozen=True)
class RunConfig:
    algo: str = "bc"
    env: str = "pointmass"
    dataset: str = ""
    steps: int = 300_000
    seed: int = 0
    eval_interval: int = 0          # 0 -> steps / 20
    eval_episodes: int = 50
    eval_seed: int = 12345
    subsample: int = 20
    horizon: int = 200
    # network / policy
    hidden_layers: int = 2
    hidden_size: int = 256
    log_std_init: float = -2.0
    dtype: str = "float32"
    # PPO
    gamma: float = 0.99
    gae_lambda: float = 0.9
    normalize_advantages: bool = True
    normalize_values: bool = True
    agent_lr: float = 3e-4
    rollout_length: int = 2048
    max_grad_norm: float = 0.5
    ppo_clip: float = 0.25
    ppo_iterations: int = 10
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    # imitation
    imitation_epochs: int = 25
    imitation_lr: float = 3e-4
    imitation_batch_size: int = 64
    adversarial_epochs: int = 5
    replay_multiplier: int = 3
    r1_coef: float = 1.0
    disc_batch_size: int = 256
    reward_cap: float = 10.0
    gmmil_self_similarity: bool = True
    red_output_dim: int = 128
    dril_ensemble: int = 8
    dril_dropout: float = 0.1
    dril_quantile: float = 0.98
    dril_statistic: str = "mean"
    # off-grid values (small test configurations) are allowed when false
    strict: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.algo not in RUN_ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r}; expected one of {RUN_ALGORITHMS}")
        if self.env not in ("pointmass", "pendulum"):
            raise ConfigError(f"unknown environment {self.env!r}")
        if self.steps <= 0:
            raise ConfigError("steps must be positive")
        if self.eval_episodes < 1 or self.eval_interval < 0 or self.subsample < 1:
            raise ConfigError("eval_episodes / subsample must be >= 1, eval_interval >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self.dril_statistic not in ("mean", "density"):
            raise ConfigError("dril_statistic must be 'mean' or 'density'")
        if not 0.0 < self.dril_quantile <= 1.0:
            raise ConfigError("dril_quantile must lie in (0, 1]")
        if not 0.0 <= self.dril_dropout < 1.0:
            raise ConfigError("dril_dropout must lie in [0, 1)")
        if self.dril_ensemble < 2 or self.red_output_dim < 1 or self.reward_cap <= 0:
            raise ConfigError("dril_ensemble >= 2, red_output_dim >= 1, reward_cap > 0 required")
        if self.rollout_length < 2 or self.hidden_layers < 1 or self.hidden_size < 1:
            raise ConfigError("rollout_length >= 2 and a non-empty network are required")
        if not self.strict:
            return
        for key, options in CHOICES.items():
            if getattr(self, key) not in options:
                raise ConfigError(f"{key}={getattr(self, key)!r} outside search space {options}")
        for key, (lo, hi) in RANGES.items():
            if not lo * (1 - 1e-9) <= getattr(self, key) <= hi * (1 + 1e-9):
                raise ConfigError(f"{key}={getattr(self, key)!r} outside range [{lo}, {hi}]")
        for key, value in FIXED.items():
            if getattr(self, key) != value:
                raise ConfigError(f"{key} is fixed at {value}; pass strict = false to override")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def hidden(self) -> tuple[int, ...]:
        return (self.hidden_size,) * self.hidden_layers

    @property
    def interval(self) -> int:
        return self.eval_interval or max(1, self.steps // 20)

    def ppo(self) -> PpoConfig:
        return PpoConfig(clip=self.ppo_clip, iterations=self.ppo_iterations,
                         value_coef=self.value_coef, entropy_coef=self.entropy_coef,
                         gamma=self.gamma, lam=self.gae_lambda,
                         normalize_advantages=self.normalize_advantages,
                         max_grad_norm=self.max_grad_norm, lr=self.agent_lr,
                         rollout_length=self.rollout_length,
                         normalize_values=self.normalize_values)

    def replace(self, **changes) -> "RunConfig":
        try:
            return dataclasses.replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_text(self) -> str:
        return "".join(f"{f.name} = {format_value(getattr(self, f.name))}\n" for f in fields(self))

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_value(key: str, text: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    kind = _FIELD_TYPES[key]
    text = text.strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("true", "on", "yes", "1"):
                return True
            if low in ("false", "off", "no", "0"):
                return False
            raise ValueError(text)
        if kind == "int":
            value = float(text)
            if not value.is_integer():
                raise ValueError(text)
            return int(value)
        if kind == "float":
            value = float(text)
            if not math.isfinite(value):
                raise ValueError(text)
            return value
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {text!r} as {kind}") from None
    return text


def parse_assignments(lines) -> dict:
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = parse_value(key, value)
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        values.update(parse_assignments(text.splitlines()))
    values.update(overrides or {})
    return RunConfig(**values)

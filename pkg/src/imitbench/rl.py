"""On-policy PPO with generalised advantage estimation.

One environment instance, full-batch epochs (the minibatch is the whole
rollout), a separate value network, and a single Adam optimiser over the
policy and value parameters whose joint gradient is clipped to a global
l2 norm before every step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approx import (Adam, GaussianPolicy, MlpParams, check_finite, clip_global_norm,
                     gaussian_log_prob, log_prob_backward, mlp_backward, mlp_forward,
                     mlp_forward_cache, policy_entropy, policy_sample)
from .envs import EnvSpec, EnvState, env_reset, env_step
from .errors import ConfigError, NumericalError


@dataclass(frozen=True)
class PpoConfig:
    clip: float = 0.25
    iterations: int = 10
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    gamma: float = 0.99
    lam: float = 0.9
    normalize_advantages: bool = True
    max_grad_norm: float = 0.5
    lr: float = 3e-4
    rollout_length: int = 2048
    normalize_values: bool = True

    def __post_init__(self):
        if self.clip <= 0:
            raise ConfigError("PPO clip ratio must be positive")
        if self.value_coef < 0 or self.entropy_coef < 0:
            raise ConfigError("loss coefficients must be non-negative")
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ConfigError("gamma and lambda must lie in [0, 1]")
        if self.iterations < 0 or self.rollout_length < 2:
            raise ConfigError("need iterations >= 0 and rollout length >= 2")


class ReturnNormalizer:
    """Running mean/std of value targets; the critic regresses standardised returns.

    GAE always works in reward units: :meth:`denormalize` maps critic outputs
    back before advantages are formed.
    """

    def __init__(self, enabled: bool = True, eps: float = 1e-4):
        self.enabled = enabled
        self.mean = 0.0
        self.var = 1.0
        self.count = eps

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var)) if self.enabled else 1.0

    def update(self, returns) -> None:
        if not self.enabled:
            return
        x = np.asarray(returns, dtype=np.float64)
        b_mean, b_var, b_n = x.mean(), x.var(), x.size
        delta = b_mean - self.mean
        total = self.count + b_n
        self.mean += delta * b_n / total
        m2 = self.var * self.count + b_var * b_n + delta ** 2 * self.count * b_n / total
        self.var = max(m2 / total, 1e-8)
        self.count = total

    def normalize(self, returns):
        if not self.enabled:
            return returns
        return (returns - self.mean) / self.std

    def denormalize(self, values):
        if not self.enabled:
            return values
        return values * self.std + self.mean


@dataclass(frozen=True)
class AgentBatch:
    """Reward-free agent experience handed to reward providers."""
    states: np.ndarray
    actions: np.ndarray      # clamped actions as executed by the environment
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self):
        return self.states.shape[0]

    @property
    def pairs(self) -> np.ndarray:
        return np.concatenate([self.states, self.actions], axis=1)


@dataclass
class RolloutBuffer:
    capacity: int
    state_dim: int
    action_dim: int
    size: int = 0
    states: np.ndarray = field(init=False)
    actions: np.ndarray = field(init=False)       # raw policy samples (for log-probs)
    env_actions: np.ndarray = field(init=False)   # clamped
    next_states: np.ndarray = field(init=False)
    env_rewards: np.ndarray = field(init=False)   # true reward; PPO baseline only
    terminals: np.ndarray = field(init=False)
    episode_ends: np.ndarray = field(init=False)  # terminal or horizon cut-off
    log_probs: np.ndarray | None = None
    values: np.ndarray | None = None
    next_values: np.ndarray | None = None
    rewards: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __post_init__(self):
        if self.capacity < 2:
            raise ConfigError("rollout buffer capacity must be >= 2")
        n, sd, ad = self.capacity, self.state_dim, self.action_dim
        self.states = np.zeros((n, sd))
        self.actions = np.zeros((n, ad))
        self.env_actions = np.zeros((n, ad))
        self.next_states = np.zeros((n, sd))
        self.env_rewards = np.zeros(n)
        self.terminals = np.zeros(n, bool)
        self.episode_ends = np.zeros(n, bool)

    @property
    def full(self) -> bool:
        return self.size == self.capacity

    def clear(self) -> None:
        self.size = 0
        self.log_probs = self.values = self.next_values = None
        self.rewards = self.advantages = self.returns = None

    def agent_batch(self) -> AgentBatch:
        n = self.size
        return AgentBatch(self.states[:n], self.env_actions[:n], self.next_states[:n],
                          self.terminals[:n])


@dataclass
class EnvCursor:
    """Where the single environment instance currently is, carried across rollouts."""
    spec: EnvSpec
    rng: np.random.Generator
    state: EnvState | None = None
    obs: np.ndarray | None = None
    steps_taken: int = 0
    episode_return: float = 0.0
    finished_returns: list[float] = field(default_factory=list)

    def ensure_started(self):
        if self.state is None or self.state.done:
            self.state, self.obs = env_reset(self.spec, self.rng)
            self.episode_return = 0.0


def collect_rollout(policy: GaussianPolicy, value_net: MlpParams, cursor: EnvCursor,
                    buffer: RolloutBuffer, rng: np.random.Generator, provider=None,
                    value_norm: ReturnNormalizer | None = None) -> RolloutBuffer:
    """Fill ``buffer`` with exactly ``capacity`` environment steps.

    Episodes continue across buffer boundaries. Log-probabilities and value
    estimates are evaluated in one batch after collection (the parameters do
    not change meanwhile). When ``provider`` is given its rewards are written
    to ``buffer.rewards``.
    """
    if buffer.size:
        raise ValueError("collect_rollout needs an empty buffer")
    spec = cursor.spec
    for t in range(buffer.capacity):
        cursor.ensure_started()
        obs = cursor.obs
        a = policy_sample(policy, obs, rng)
        a_env = spec.clamp(a)
        cursor.state, nxt, r, done = env_step(cursor.state, a_env)
        buffer.states[t] = obs
        buffer.actions[t] = a
        buffer.env_actions[t] = a_env
        buffer.next_states[t] = nxt
        buffer.env_rewards[t] = r
        buffer.terminals[t] = cursor.state.terminated
        buffer.episode_ends[t] = done
        cursor.obs = nxt
        cursor.steps_taken += 1
        cursor.episode_return += r
        if done:
            cursor.finished_returns.append(cursor.episode_return)
    buffer.size = buffer.capacity
    dtype = policy.log_std.dtype
    buffer.log_probs = gaussian_log_prob(mlp_forward(policy.mean, buffer.states.astype(dtype)),
                                         policy.log_std, buffer.actions.astype(dtype))
    value_norm = value_norm or ReturnNormalizer(enabled=False)
    buffer.values = value_norm.denormalize(
        mlp_forward(value_net, buffer.states.astype(dtype))[:, 0].astype(np.float64))
    buffer.next_values = value_norm.denormalize(
        mlp_forward(value_net, buffer.next_states.astype(dtype))[:, 0].astype(np.float64))
    if provider is not None:
        buffer.rewards = check_finite(np.asarray(provider.reward(buffer.agent_batch(), policy),
                                                 dtype=np.float64), "imitation reward")
    return buffer


def compute_gae(rewards, values, next_values, terminals, episode_ends,
                gamma: float = 0.99, lam: float = 0.9):
    """Generalised advantage estimates and value targets.

    ``delta_t = r_t + gamma * V(s'_t) * (1 - terminal_t) - V(s_t)``; the
    lambda-recursion restarts after every episode end (terminal or cut-off)
    and after the last entry, where a truncated episode keeps its bootstrap
    value through ``next_values``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    next_values = np.asarray(next_values, dtype=np.float64)
    not_term = 1.0 - np.asarray(terminals, dtype=np.float64)
    cont = 1.0 - np.asarray(episode_ends, dtype=np.float64)
    deltas = rewards + gamma * next_values * not_term - values
    adv = np.zeros_like(deltas)
    running = 0.0
    for t in range(deltas.size - 1, -1, -1):
        running = deltas[t] + gamma * lam * cont[t] * running
        adv[t] = running
    return adv, adv + values


def normalize_advantages(advantages, eps: float = 1e-8) -> np.ndarray:
    adv = np.asarray(advantages, dtype=np.float64)
    if adv.size < 2:
        raise ValueError("need at least two advantages to normalise")
    return (adv - adv.mean()) / (adv.std() + eps)


def finish_rollout(buffer: RolloutBuffer, config: PpoConfig,
                   value_norm: ReturnNormalizer | None = None) -> None:
    """GAE, advantage normalisation, and (optionally standardised) value targets."""
    if buffer.rewards is None:
        raise ValueError("buffer has no rewards")
    adv, ret = compute_gae(buffer.rewards, buffer.values, buffer.next_values, buffer.terminals,
                           buffer.episode_ends, config.gamma, config.lam)
    if value_norm is not None:
        value_norm.update(ret)
        ret = value_norm.normalize(ret)
    buffer.returns = ret
    buffer.advantages = normalize_advantages(adv) if config.normalize_advantages else adv


def clipped_surrogate(ratio, advantages, clip: float):
    """Per-sample ``-min(rho A, clip(rho) A)`` and a mask of where the unclipped branch is active."""
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages
    active = unclipped <= clipped
    return -np.minimum(unclipped, clipped), active


def ppo_loss(policy: GaussianPolicy, value_net: MlpParams, states, actions, old_log_probs,
             advantages, returns, config: PpoConfig, need_grads: bool = True):
    """Full-batch PPO loss and its gradient over ``policy.arrays() + value_net.arrays()``."""
    n = states.shape[0]
    mu, pcache = mlp_forward_cache(policy.mean, states)
    log_probs = gaussian_log_prob(mu, policy.log_std, actions)
    ratio = np.exp(log_probs - old_log_probs)
    surr, active = clipped_surrogate(ratio, advantages, config.clip)
    v, vcache = mlp_forward_cache(value_net, states)
    v = v[:, 0]
    entropy = policy_entropy(policy)
    policy_loss = float(surr.mean())
    value_loss = float(np.mean((v - returns) ** 2))
    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy
    info = {"loss": loss, "policy_loss": policy_loss, "value_loss": value_loss,
            "entropy": entropy, "clip_fraction": float(np.mean(~active))}
    if not need_grads:
        return loss, info, None
    d_logp = np.where(active, -advantages * ratio, 0.0) / n
    g_mean, g_log_std, _ = log_prob_backward(policy, pcache, mu, actions, d_logp)
    g_log_std = g_log_std - config.entropy_coef
    g_value, _ = mlp_backward(value_net, vcache, (2.0 * config.value_coef / n * (v - returns))[:, None])
    return loss, info, g_mean.arrays() + [g_log_std] + g_value.arrays()


def ppo_update(policy: GaussianPolicy, value_net: MlpParams, optimizer: Adam,
               buffer: RolloutBuffer, config: PpoConfig) -> dict:
    """Run ``config.iterations`` full-batch clipped-surrogate steps."""
    if buffer.advantages is None:
        raise ValueError("compute advantages before the PPO update")
    dtype = policy.log_std.dtype
    states = buffer.states.astype(dtype)
    actions = buffer.actions.astype(dtype)
    old = buffer.log_probs
    adv = buffer.advantages.astype(dtype)
    ret = buffer.returns.astype(dtype)
    params = policy.arrays() + value_net.arrays()
    info: dict = {}
    for _ in range(config.iterations):
        loss, info, grads = ppo_loss(policy, value_net, states, actions, old, adv, ret, config)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite PPO loss: {info}")
        grads, norm = clip_global_norm(grads, config.max_grad_norm)
        info["grad_norm"] = norm
        optimizer.step(params, grads)
    return info

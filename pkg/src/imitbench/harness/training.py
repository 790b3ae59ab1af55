"""Training loops, deterministic evaluation, and expert generation."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import dataset as ds
from ..approx import (Adam, GaussianPolicy, MlpParams, check_finite, make_policy, make_value_net,
                      mlp_forward)
from ..envs import EnvSpec, env_reset, env_step, make_env
from ..errors import ConfigError
from ..rewards import bc_train, make_provider
from ..rl import (EnvCursor, ReturnNormalizer, RolloutBuffer, collect_rollout, finish_rollout,
                  ppo_update)
from .config import RunConfig

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalResult:
    returns: np.ndarray
    seed: int

    @property
    def episodes(self) -> int:
        return int(self.returns.size)

    @property
    def mean(self) -> float:
        return float(self.returns.mean())

    @property
    def std(self) -> float:
        return float(self.returns.std())


@dataclass(frozen=True)
class EvalReport:
    """Per-seed final-evaluation statistics and their aggregate across seeds."""
    seeds: tuple[int, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]
    episodes: int

    @classmethod
    def from_results(cls, results: list[EvalResult]) -> "EvalReport":
        if not results:
            raise ValueError("no evaluation results")
        episodes = {r.episodes for r in results}
        if len(episodes) != 1:
            raise ValueError("evaluation results disagree on the episode count")
        return cls(tuple(r.seed for r in results), tuple(r.mean for r in results),
                   tuple(r.std for r in results), episodes.pop())

    @property
    def n_seeds(self) -> int:
        return len(self.seeds)

    @property
    def mean(self) -> float:
        return float(np.mean(self.means))

    @property
    def std(self) -> float:
        return float(np.std(self.means))

    @property
    def stderr(self) -> float:
        n = len(self.means)
        return float(np.std(self.means, ddof=1) / np.sqrt(n)) if n > 1 else 0.0


def evaluate(policy: GaussianPolicy, env: EnvSpec, episodes: int = 50, seed: int = 0) -> EvalResult:
    """Undiscounted true return of the mean-action policy over ``episodes`` resets.

    Episodes run in lockstep so the policy is evaluated on one batch per step.
    Reset states come from the same per-episode seeds used to record expert data.
    """
    if episodes < 1:
        raise ValueError("need at least one evaluation episode")
    states, obs = [], []
    for ss in ds.episode_seeds(seed, episodes):
        reset_rng = np.random.default_rng(ss.spawn(2)[0])
        st, ob = env_reset(env, reset_rng)
        states.append(st)
        obs.append(ob)
    returns = np.zeros(episodes)
    active = list(range(episodes))
    obs = np.array(obs)
    dtype = policy.log_std.dtype
    while active:
        actions = mlp_forward(policy.mean, obs[active].astype(dtype)).astype(np.float64)
        still = []
        for row, i in enumerate(active):
            states[i], obs[i], r, done = env_step(states[i], env.clamp(actions[row]))
            returns[i] += r
            if not done:
                still.append(i)
        active = still
    return EvalResult(returns, seed)


def zero_action_return(env: EnvSpec, episodes: int = 50, seed: int = 0) -> float:
    """Mean return of the policy that always outputs zero force/torque."""
    total = 0.0
    zero = np.zeros(env.action_dim)
    for ss in ds.episode_seeds(seed, episodes):
        state, _ = env_reset(env, np.random.default_rng(ss.spawn(2)[0]))
        done = False
        while not done:
            state, _, r, done = env_step(state, zero)
            total += r
    return total / episodes


def normalised_score(ret: float, reference: float, baseline: float) -> float:
    """Fraction of the way from ``baseline`` to ``reference`` (1.0 = reference return)."""
    if reference == baseline:
        raise ValueError("reference and baseline returns coincide")
    return (ret - baseline) / (reference - baseline)


# --------------------------------------------------------------------------
# policy persistence


def save_policy(policy: GaussianPolicy, path) -> None:
    arrays = {f"W{i}": w for i, w in enumerate(policy.mean.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(policy.mean.biases)})
    with open(path, "wb") as fh:
        np.savez(fh, log_std=policy.log_std, **arrays)


def load_policy(path) -> GaussianPolicy:
    try:
        with np.load(path) as z:
            n = sum(1 for k in z.files if k.startswith("W"))
            weights = [z[f"W{i}"] for i in range(n)]
            biases = [z[f"b{i}"] for i in range(n)]
            log_std = z["log_std"]
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load policy from {path}: {exc}") from None
    return GaussianPolicy(MlpParams(weights, biases), log_std)


# --------------------------------------------------------------------------
# training


@dataclass
class EvalPoint:
    step: int
    mean: float
    std: float


@dataclass
class TrainResult:
    policy: GaussianPolicy
    evals: list[EvalPoint]
    pretrain_seconds: float
    train_seconds: float
    env_steps: int
    info: dict = field(default_factory=dict)

    @property
    def final(self) -> EvalPoint:
        return self.evals[-1]


def _streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("init", "env", "action", "provider")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def load_expert(cfg: RunConfig) -> ds.TrajectoryDataset:
    if not cfg.dataset:
        raise ConfigError(f"algorithm {cfg.algo!r} needs a dataset path")
    path = Path(cfg.dataset)
    if not path.is_file():
        raise ConfigError(f"dataset not found: {path}")
    data = ds.load(path)
    if data.env_name and data.env_name != cfg.env:
        raise ConfigError(f"dataset was recorded on {data.env_name!r}, not {cfg.env!r}")
    return ds.subsample(data, cfg.subsample) if cfg.subsample > 1 else data


def run_training(cfg: RunConfig, expert: ds.TrajectoryDataset | None = None,
                 on_eval=None) -> TrainResult:
    """Train one policy for ``cfg.algo``; evaluations use the true reward only.

    ``expert`` may be passed pre-loaded (already subsampled); otherwise it is
    read from ``cfg.dataset``. ``on_eval(step, policy, result)`` runs after
    every evaluation.
    """
    env = make_env(cfg.env, cfg.horizon)
    rngs = _streams(cfg.seed)
    dtype = cfg.np_dtype
    policy = make_policy(env.state_dim, env.action_dim, rngs["init"], cfg.hidden,
                         cfg.log_std_init, dtype=dtype)
    evals: list[EvalPoint] = []
    eval_clock = [0.0]

    def record(step: int) -> None:
        started = time.perf_counter()
        res = evaluate(policy, env, cfg.eval_episodes, cfg.eval_seed)
        evals.append(EvalPoint(step, res.mean, res.std))
        log.info("%s seed %d step %d: return %.3f +- %.3f", cfg.algo, cfg.seed, step,
                 res.mean, res.std)
        if on_eval is not None:
            on_eval(step, policy, res)
        eval_clock[0] += time.perf_counter() - started

    view = None
    if cfg.algo != "ppo":
        if expert is None:
            expert = load_expert(cfg)
        if len(expert) == 0:
            raise ConfigError("expert dataset is empty")
        view = expert.view()

    if cfg.algo == "bc":
        t0 = time.perf_counter()
        history = bc_train(policy, view, cfg.imitation_epochs, cfg.agent_lr, rngs["provider"],
                           cfg.imitation_batch_size, cfg.max_grad_norm,
                           callback=lambda epoch, _p: record(epoch + 1))
        return TrainResult(policy, evals, time.perf_counter() - t0 - eval_clock[0], 0.0, 0,
                           {"bc_nll": history[-1]})

    value_net = make_value_net(env.state_dim, rngs["init"], cfg.hidden, dtype)
    ppo = cfg.ppo()
    optimizer = Adam(policy.arrays() + value_net.arrays(), cfg.agent_lr)
    value_norm = ReturnNormalizer(cfg.normalize_values)
    cursor = EnvCursor(env, rngs["env"])
    info: dict = {}

    provider = None
    pretrain_seconds = 0.0
    if view is not None:
        provider = make_provider(cfg, view, rngs["provider"])
        if provider.requires_pretraining:
            t0 = time.perf_counter()
            info.update(provider.pretrain(view, rngs["provider"]))
            pretrain_seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    steps, next_eval, first = 0, cfg.interval, True
    buffer = RolloutBuffer(cfg.rollout_length, env.state_dim, env.action_dim)
    while steps < cfg.steps:
        buffer.clear()
        collect_rollout(policy, value_net, cursor, buffer, rngs["action"], value_norm=value_norm)
        if provider is None:
            buffer.rewards = buffer.env_rewards.copy()
        else:
            batch = buffer.agent_batch()
            if first:
                provider.start(view, batch)
            if provider.updates_online:
                info.update(provider.update(batch, policy, rngs["provider"]))
            buffer.rewards = check_finite(np.asarray(provider.reward(batch, policy),
                                                     dtype=np.float64), "imitation reward")
        first = False
        finish_rollout(buffer, ppo, value_norm)
        info.update(ppo_update(policy, value_net, optimizer, buffer, ppo))
        steps += buffer.size
        while steps >= next_eval:
            record(next_eval)
            next_eval += cfg.interval
    train_seconds = time.perf_counter() - t0 - eval_clock[0]
    info["episodes_finished"] = len(cursor.finished_returns)
    return TrainResult(policy, evals, pretrain_seconds, train_seconds, steps, info)


# --------------------------------------------------------------------------
# expert generation


@dataclass
class ExpertRun:
    policy: GaussianPolicy
    checkpoint_step: int
    checkpoints: list[EvalPoint]
    zero_return: float
    final_return: float
    score: float


def train_expert(cfg: RunConfig, quality: float = 0.75) -> ExpertRun:
    """PPO on the true reward; keep the first checkpoint reaching ``quality``.

    Quality is measured as the normalised score between the zero-action
    policy and the last checkpoint (a "medium" rather than converged expert).
    """
    if not 0.0 < quality <= 1.0:
        raise ConfigError("expert quality must lie in (0, 1]")
    cfg = cfg.replace(algo="ppo")
    env = make_env(cfg.env, cfg.horizon)
    snapshots: list[GaussianPolicy] = []
    result = run_training(cfg, on_eval=lambda _s, pol, _r: snapshots.append(pol.copy()))
    checkpoints = result.evals
    if not checkpoints:
        raise ConfigError("expert training finished before the first checkpoint")
    zero = zero_action_return(env, cfg.eval_episodes, cfg.eval_seed)
    final = checkpoints[-1].mean
    chosen = len(checkpoints) - 1
    if final > zero:
        for i, cp in enumerate(checkpoints):
            if normalised_score(cp.mean, final, zero) >= quality:
                chosen = i
                break
    else:
        log.warning("expert training did not beat the zero-action policy; keeping the last checkpoint")
    step, chosen_policy = checkpoints[chosen].step, snapshots[chosen]
    score = normalised_score(checkpoints[chosen].mean, final, zero) if final != zero else 1.0
    return ExpertRun(chosen_policy, step, checkpoints, zero, final, score)

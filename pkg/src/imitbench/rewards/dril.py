"""Disagreement-regularised imitation, reward-only variant.

A dropout BC policy stands in for an ensemble: ``E`` dropout masks are drawn
once, each defining one member. Uncertainty at (s, a) is the across-member
variance of the predicted mean action, summed over action dimensions
(``statistic="mean"``), or the variance of the members' densities at ``a``
(``statistic="density"``). The reward is +1 when the uncertainty is at most
the expert-set quantile ``q`` and -1 otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..approx import (GaussianPolicy, draw_dropout_masks, gaussian_log_prob, make_policy,
                      mlp_forward)
from ..rl import AgentBatch
from .base import RewardProvider, as_view
from .bc import bc_train


@dataclass
class DropoutEnsemble:
    policy: GaussianPolicy
    masks: list[list[np.ndarray]] | None   # members x hidden layers, or None without dropout
    size: int
    statistic: str = "mean"
    q: float | None = None

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("ensemble needs at least two members")
        if self.statistic not in ("mean", "density"):
            raise ValueError("statistic must be 'mean' or 'density'")


def make_ensemble(state_dim: int, action_dim: int, rng: np.random.Generator, size: int = 8,
                  dropout: float = 0.1, statistic: str = "mean", dtype=np.float64) -> DropoutEnsemble:
    policy = make_policy(state_dim, action_dim, rng, dropout=dropout, dtype=dtype)
    return DropoutEnsemble(policy, None, size, statistic)


def draw_member_masks(ensemble: DropoutEnsemble, rng: np.random.Generator) -> None:
    if ensemble.policy.mean.dropout == 0.0:
        ensemble.masks = None
        return
    ensemble.masks = [draw_dropout_masks(ensemble.policy.mean, rng) for _ in range(ensemble.size)]


def uncertainty(ensemble: DropoutEnsemble, states, actions=None) -> np.ndarray:
    """Across-member disagreement per row."""
    states = np.atleast_2d(np.asarray(states, dtype=ensemble.policy.log_std.dtype))
    if ensemble.masks is None:
        # identical members; np.var would leave rounding residue instead of exact zeros
        return np.zeros(states.shape[0])
    outs = [mlp_forward(ensemble.policy.mean, states, m) for m in ensemble.masks]
    mu = np.stack(outs).astype(np.float64)             # (E, n, ad)
    if ensemble.statistic == "mean":
        return mu.var(axis=0).sum(axis=-1)
    a = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    dens = np.exp(gaussian_log_prob(mu, ensemble.policy.log_std.astype(np.float64), a[None]))
    return dens.var(axis=0)


def quantile_threshold(values, level: float) -> float:
    """The ceil(level * n)-th smallest value (1-based order statistic)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("no values")
    if not 0.0 < level <= 1.0:
        raise ValueError("quantile level must lie in (0, 1]")
    k = max(1, math.ceil(level * v.size - 1e-9))
    return float(v[k - 1])


def dril_pretrain(ensemble: DropoutEnsemble, expert, epochs: int, lr: float,
                  rng: np.random.Generator, quantile: float = 0.98, batch_size: int = 64,
                  max_grad_norm: float = 0.5) -> list[float]:
    """Dropout-BC on the expert, fix the member masks, then set ``q``."""
    expert = as_view(expert)
    if len(expert) == 0:
        raise ValueError("empty expert dataset")
    history = bc_train(ensemble.policy, expert, epochs, lr, rng, batch_size, max_grad_norm)
    draw_member_masks(ensemble, rng)
    ensemble.q = quantile_threshold(uncertainty(ensemble, expert.states, expert.actions), quantile)
    return history


def dril_reward_from_uncertainty(u, q: float) -> np.ndarray:
    return np.where(np.asarray(u) <= q, 1.0, -1.0)


def dril_reward(ensemble: DropoutEnsemble, states, actions) -> np.ndarray:
    if ensemble.q is None:
        raise RuntimeError("DRIL threshold not set; pretrain first")
    return dril_reward_from_uncertainty(uncertainty(ensemble, states, actions), ensemble.q)


class DrilProvider(RewardProvider):
    tag = "dril"
    requires_pretraining = True

    def __init__(self, expert, rng: np.random.Generator, epochs: int = 25, lr: float = 3e-4,
                 size: int = 8, dropout: float = 0.1, quantile: float = 0.98,
                 statistic: str = "mean", batch_size: int = 64, max_grad_norm: float = 0.5,
                 dtype=np.float64):
        self.expert = as_view(expert)
        self.ensemble = make_ensemble(self.expert.states.shape[1], self.expert.actions.shape[1],
                                      rng, size, dropout, statistic, dtype)
        self.epochs, self.lr, self.quantile = epochs, lr, quantile
        self.batch_size, self.max_grad_norm = batch_size, max_grad_norm

    def pretrain(self, expert, rng: np.random.Generator) -> dict:
        history = dril_pretrain(self.ensemble, as_view(expert), self.epochs, self.lr, rng,
                                self.quantile, self.batch_size, self.max_grad_norm)
        return {"bc_nll": history[-1] if history else float("nan"), "q": self.ensemble.q}

    def reward(self, batch: AgentBatch, policy=None) -> np.ndarray:
        return dril_reward(self.ensemble, batch.states, batch.actions)

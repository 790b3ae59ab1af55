"""Random expert distillation.

A predictor is regressed onto a frozen random network over expert (s, a)
pairs; the reward is ``exp(-sigma * |f_pred - f_target|^2)``. ``sigma`` is
set to one over the median squared prediction error on the expert set, so
the median expert pair scores ``1/e``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..approx import (Adam, HIDDEN_SIZES, MlpParams, clip_global_norm, mlp_backward,
                      mlp_forward, mlp_forward_cache, mlp_init)
from ..rl import AgentBatch
from .base import InputScaler, RewardProvider, as_view, iterate_minibatches

log = logging.getLogger(__name__)

FALLBACK_SIGMA = 1.0


@dataclass
class RndPair:
    target: MlpParams
    predictor: MlpParams
    scaler: InputScaler
    sigma: float | None = None
    sigma_fallback: bool = False

    @property
    def out_dim(self) -> int:
        return self.target.out_dim


def make_rnd_pair(expert, rng: np.random.Generator, out_dim: int = 128, hidden=HIDDEN_SIZES,
                  dtype=np.float64) -> RndPair:
    expert = as_view(expert)
    in_dim = expert.pairs.shape[1]
    target = mlp_init((in_dim, *hidden, out_dim), rng, dtype=dtype)
    predictor = mlp_init((in_dim, *hidden, out_dim), rng, dtype=dtype)
    return RndPair(target, predictor, InputScaler(expert.pairs))


def prediction_errors(pair: RndPair, pairs) -> np.ndarray:
    """Squared l2 prediction error per (s, a) row."""
    x = pair.scaler(pairs)
    diff = (mlp_forward(pair.predictor, x) - mlp_forward(pair.target, x)).astype(np.float64)
    return np.sum(diff * diff, axis=1)


def rnd_loss(pair: RndPair, x, need_grads: bool = False):
    """Mean squared error over rows and output units, with predictor gradients."""
    pred, cache = mlp_forward_cache(pair.predictor, x)
    diff = pred - mlp_forward(pair.target, x)
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    if not need_grads:
        return loss, None
    grads, _ = mlp_backward(pair.predictor, cache, 2.0 * diff / diff.size)
    return loss, grads.arrays()


def set_sigma(pair: RndPair, errors) -> float:
    med = float(np.median(errors))
    if med <= 0:
        nonzero = np.asarray(errors)[np.asarray(errors) > 0]
        if nonzero.size:
            med = float(nonzero.min())
        else:
            log.warning("all expert prediction errors are zero; using sigma = %s", FALLBACK_SIGMA)
            pair.sigma, pair.sigma_fallback = FALLBACK_SIGMA, True
            return pair.sigma
    pair.sigma, pair.sigma_fallback = 1.0 / med, False
    return pair.sigma


def red_pretrain(pair: RndPair, expert, epochs: int, lr: float, rng: np.random.Generator,
                 batch_size: int = 64, max_grad_norm: float = 0.5) -> list[float]:
    """Fit the predictor to the frozen target on expert pairs, then set ``sigma``.

    Returns the mean expert MSE after each epoch (the first entry is before training).
    """
    expert = as_view(expert)
    if len(expert) == 0:
        raise ValueError("empty expert dataset")
    x = pair.scaler(expert.pairs)
    params = pair.predictor.arrays()
    opt = Adam(params, lr)
    history = [rnd_loss(pair, x)[0]]
    for _ in range(epochs):
        for idx in iterate_minibatches(len(x), batch_size, rng):
            _, grads = rnd_loss(pair, x[idx], True)
            grads, _ = clip_global_norm(grads, max_grad_norm)
            opt.step(params, grads)
        history.append(rnd_loss(pair, x)[0])
    set_sigma(pair, prediction_errors(pair, expert.pairs))
    return history


def red_reward_from_error(sq_error, sigma: float):
    return np.exp(-sigma * np.asarray(sq_error, dtype=np.float64))


def red_reward(pair: RndPair, states, actions) -> np.ndarray:
    if pair.sigma is None:
        raise RuntimeError("RED bandwidth not set; pretrain first")
    pairs = np.concatenate([np.atleast_2d(states), np.atleast_2d(actions)], axis=1)
    return red_reward_from_error(prediction_errors(pair, pairs), pair.sigma)


class RedProvider(RewardProvider):
    tag = "red"
    requires_pretraining = True

    def __init__(self, expert, rng: np.random.Generator, epochs: int = 25, lr: float = 3e-4,
                 out_dim: int = 128, batch_size: int = 64, max_grad_norm: float = 0.5,
                 dtype=np.float64):
        self.expert = as_view(expert)
        self.pair = make_rnd_pair(self.expert, rng, out_dim, dtype=dtype)
        self.epochs, self.lr, self.batch_size = epochs, lr, batch_size
        self.max_grad_norm = max_grad_norm

    def pretrain(self, expert, rng: np.random.Generator) -> dict:
        history = red_pretrain(self.pair, as_view(expert), self.epochs, self.lr, rng,
                               self.batch_size, self.max_grad_norm)
        return {"rnd_mse": history[-1], "sigma": self.pair.sigma}

    def reward(self, batch: AgentBatch, policy=None) -> np.ndarray:
        return red_reward(self.pair, batch.states, batch.actions)

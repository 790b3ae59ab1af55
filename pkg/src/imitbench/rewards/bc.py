"""Behavioural cloning: maximum likelihood of expert actions under the Gaussian policy."""
from __future__ import annotations

import numpy as np

from ..approx import (Adam, GaussianPolicy, clip_global_norm, draw_dropout_masks,
                      gaussian_log_prob, log_prob_backward, mlp_forward_cache)
from ..dataset import ExpertView
from .base import as_view, iterate_minibatches


def bc_nll(policy: GaussianPolicy, states, actions, masks=None, need_grads: bool = False):
    """Mean negative log-likelihood and, optionally, its gradient list."""
    dtype = policy.log_std.dtype
    states = np.asarray(states, dtype=dtype)
    actions = np.asarray(actions, dtype=dtype)
    mu, cache = mlp_forward_cache(policy.mean, states, masks)
    nll = -float(np.mean(gaussian_log_prob(mu, policy.log_std, actions)))
    if not need_grads:
        return nll, None
    n = states.shape[0]
    g_mean, g_log_std, _ = log_prob_backward(policy, cache, mu, actions,
                                             np.full(n, -1.0 / n, dtype=dtype))
    return nll, g_mean.arrays() + [g_log_std]


def bc_train(policy: GaussianPolicy, expert: ExpertView, epochs: int, lr: float,
             rng: np.random.Generator, batch_size: int = 64, max_grad_norm: float = 0.5,
             callback=None) -> list[float]:
    """Fit ``policy`` to the expert pairs in place; returns the per-epoch training NLL.

    Dropout (when the policy mean has it) draws fresh per-row masks every step.
    ``callback(epoch, policy)`` runs after each epoch.
    """
    expert = as_view(expert)
    n = len(expert)
    if n == 0:
        raise ValueError("cannot behaviourally clone an empty dataset")
    params = policy.arrays()
    opt = Adam(params, lr)
    history = []
    for epoch in range(epochs):
        losses = []
        for idx in iterate_minibatches(n, batch_size, rng):
            masks = draw_dropout_masks(policy.mean, rng, len(idx))
            loss, grads = bc_nll(policy, expert.states[idx], expert.actions[idx], masks, True)
            grads, _ = clip_global_norm(grads, max_grad_norm)
            opt.step(params, grads)
            losses.append(loss * len(idx))
        history.append(sum(losses) / n)
        if callback is not None:
            callback(epoch, policy)
    return history

"""Adversarial imitation: GAIL, AIRL and FAIRL discriminators and rewards.

All three are trained with binary cross-entropy (expert = 1, agent = 0) plus
an R1 penalty, the mean squared norm of dD/d(s, a) over expert samples,
taken with respect to the standardised discriminator inputs.

GAIL and FAIRL share a plain MLP logit ``y(s, a)``. AIRL uses

    y = f(s, a, s') - log pi(a|s),   f = g(s, a) + gamma * h(s') - h(s),

so ``D = exp(f) / (exp(f) + pi(a|s))``. ``h(s')`` is masked on true
terminals.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..approx import (Adam, GaussianPolicy, MlpParams, HIDDEN_SIZES, clip_global_norm,
                      gaussian_log_prob, mlp_backward, mlp_double_backward, mlp_forward,
                      mlp_forward_cache, mlp_init, mlp_input_gradient)
from ..errors import NumericalError
from ..rl import AgentBatch
from .base import InputScaler, RewardProvider, as_view

REWARD_CAP = 10.0


def sigmoid(y):
    return 0.5 * (1.0 + np.tanh(0.5 * y))


def softplus(y):
    return np.logaddexp(0.0, y)


def take(batch, idx) -> AgentBatch:
    return AgentBatch(batch.states[idx], batch.actions[idx], batch.next_states[idx],
                      batch.terminals[idx])


def concat(batches) -> AgentBatch:
    return AgentBatch(*(np.concatenate([getattr(b, f) for b in batches])
                        for f in ("states", "actions", "next_states", "terminals")))


@dataclass
class Discriminator:
    kind: str                   # "logit" (GAIL / FAIRL) or "airl"
    net: MlpParams              # logit net, or the AIRL reward head g(s, a)
    sa_scaler: InputScaler
    s_scaler: InputScaler       # the state columns of sa_scaler
    shaping: MlpParams | None = None   # AIRL h(s)
    gamma: float = 0.99

    def arrays(self) -> list[np.ndarray]:
        extra = self.shaping.arrays() if self.shaping is not None else []
        return self.net.arrays() + extra

    @property
    def state_dim(self) -> int:
        return self.s_scaler.mean.shape[0]


def make_discriminator(kind: str, expert, rng: np.random.Generator, gamma: float = 0.99,
                       hidden=HIDDEN_SIZES, dtype=np.float64) -> Discriminator:
    expert = as_view(expert)
    sd, ad = expert.states.shape[1], expert.actions.shape[1]
    sa = InputScaler(expert.pairs)
    s = sa.columns(slice(0, sd))
    net = mlp_init((sd + ad, *hidden, 1), rng, dtype=dtype)
    if kind == "logit":
        return Discriminator(kind, net, sa, s)
    if kind == "airl":
        return Discriminator(kind, net, sa, s, mlp_init((sd, *hidden, 1), rng, dtype=dtype), gamma)
    raise ValueError(f"unknown discriminator kind {kind!r}")


def _policy_terms(policy: GaussianPolicy, states, actions, need_input_grad: bool):
    """log pi(a|s) and, if asked, its gradient w.r.t. raw (s, a)."""
    dtype = policy.log_std.dtype
    s = np.asarray(states, dtype=dtype)
    a = np.asarray(actions, dtype=dtype)
    mu, cache = mlp_forward_cache(policy.mean, s)
    logp = gaussian_log_prob(mu, policy.log_std, a).astype(np.float64)
    if not need_input_grad:
        return logp, None
    scaled = (a - mu) * np.exp(-2.0 * policy.log_std)
    _, grad_s = mlp_backward(policy.mean, cache, scaled, need_input_grad=True)
    return logp, np.concatenate([grad_s, -scaled], axis=1).astype(np.float64)


def disc_logits(disc: Discriminator, batch, policy: GaussianPolicy | None = None) -> np.ndarray:
    x = disc.sa_scaler(batch.pairs)
    y = mlp_forward(disc.net, x)[:, 0].astype(np.float64)
    if disc.kind == "airl":
        if policy is None:
            raise ValueError("AIRL logits need the current policy density")
        nonterm = 1.0 - np.asarray(batch.terminals, dtype=np.float64)
        y = (y + disc.gamma * nonterm * mlp_forward(disc.shaping, disc.s_scaler(batch.next_states))[:, 0]
             - mlp_forward(disc.shaping, disc.s_scaler(batch.states))[:, 0]
             - _policy_terms(policy, batch.states, batch.actions, False)[0])
    return y


def _side(disc: Discriminator, batch, policy, up_y_fn, r1: float, n_expert: int):
    """Forward one side (expert or agent) and accumulate parameter gradients.

    ``up_y_fn(y)`` gives dL/dy of the cross-entropy part. When ``r1 > 0`` this
    side is the expert side and the R1 term is added.
    Returns ``(y, penalty, grads)``.
    """
    x = disc.sa_scaler(batch.pairs)
    y_g, cache_g = mlp_forward_cache(disc.net, x)
    y = y_g[:, 0].astype(np.float64)
    sd = disc.state_dim
    if disc.kind == "airl":
        nonterm = 1.0 - np.asarray(batch.terminals, dtype=np.float64)
        h_s, cache_hs = mlp_forward_cache(disc.shaping, disc.s_scaler(batch.states))
        h_n, cache_hn = mlp_forward_cache(disc.shaping, disc.s_scaler(batch.next_states))
        logp, grad_logp = _policy_terms(policy, batch.states, batch.actions, r1 > 0)
        y = y + disc.gamma * nonterm * h_n[:, 0] - h_s[:, 0] - logp
    up_y = up_y_fn(y)
    penalty = 0.0
    if r1 > 0:
        grad_g, deltas_g = mlp_input_gradient(disc.net, cache_g)
        grad_x = grad_g.astype(np.float64)
        if disc.kind == "airl":
            grad_h, deltas_h = mlp_input_gradient(disc.shaping, cache_hs)
            grad_x[:, :sd] -= grad_h
            # chain rule into standardised coordinates
            grad_x -= grad_logp * disc.sa_scaler.std[None, :]
        s = sigmoid(y)
        ds = s * (1.0 - s)
        sq = np.sum(grad_x ** 2, axis=1)
        penalty = float(np.mean(ds ** 2 * sq))
        coef = r1 / n_expert
        up_y = up_y + coef * 2.0 * ds * ds * (1.0 - 2.0 * s) * sq
        up_grad = coef * 2.0 * (ds ** 2)[:, None] * grad_x
        g_net = mlp_double_backward(disc.net, cache_g, deltas_g, up_y, up_grad)
    else:
        g_net, _ = mlp_backward(disc.net, cache_g, up_y[:, None])
    grads = g_net.arrays()
    if disc.kind == "airl":
        if r1 > 0:
            g_hs = mlp_double_backward(disc.shaping, cache_hs, deltas_h, -up_y, -up_grad[:, :sd])
        else:
            g_hs, _ = mlp_backward(disc.shaping, cache_hs, -up_y[:, None])
        g_hn, _ = mlp_backward(disc.shaping, cache_hn, (disc.gamma * nonterm * up_y)[:, None])
        grads += [a + b for a, b in zip(g_hs.arrays(), g_hn.arrays())]
    return y, penalty, grads


def disc_loss(disc: Discriminator, expert_batch, agent_batch, policy=None, r1_coef: float = 0.0):
    """Cross-entropy plus R1 penalty, with gradients over ``disc.arrays()``."""
    m, n = len(expert_batch), len(agent_batch)
    y_e, penalty, g_e = _side(disc, expert_batch, policy,
                              lambda y: -(1.0 - sigmoid(y)) / m, r1_coef, m)
    y_a, _, g_a = _side(disc, agent_batch, policy, lambda y: sigmoid(y) / n, 0.0, m)
    ce_e = float(np.mean(softplus(-y_e)))
    ce_a = float(np.mean(softplus(y_a)))
    loss = ce_e + ce_a + r1_coef * penalty
    info = {"disc_loss": loss, "ce_expert": ce_e, "ce_agent": ce_a, "r1": penalty,
            "accuracy": 0.5 * (float(np.mean(y_e > 0)) + float(np.mean(y_a < 0)))}
    return loss, info, [a + b for a, b in zip(g_e, g_a)]


class ImitationReplay:
    """Ring store of the most recent agent rollouts."""

    def __init__(self, multiplier: int):
        if multiplier < 1:
            raise ValueError("replay multiplier must be >= 1")
        self.batches: deque[AgentBatch] = deque(maxlen=multiplier)

    def push(self, batch: AgentBatch) -> None:
        self.batches.append(batch)

    def __len__(self):
        return sum(len(b) for b in self.batches)

    def contents(self) -> AgentBatch:
        if not self.batches:
            raise ValueError("imitation replay is empty")
        return concat(list(self.batches))


def disc_train(disc: Discriminator, expert, replay: ImitationReplay, optimizer: Adam,
               rng: np.random.Generator, r1_coef: float = 1.0, epochs: int = 5,
               batch_size: int = 256, policy=None, max_grad_norm: float = 0.5) -> dict:
    """Train for ``epochs`` passes over the entire replay.

    Each agent minibatch is paired with an equally sized expert minibatch
    drawn uniformly with replacement.
    """
    if len(expert) == 0:
        raise ValueError("empty expert batch")
    agent = replay.contents()
    params = disc.arrays()
    info: dict = {}
    for _ in range(epochs):
        order = rng.permutation(len(agent))
        for start in range(0, len(agent), batch_size):
            idx = order[start:start + batch_size]
            e_idx = rng.integers(0, len(expert), size=len(idx))
            loss, info, grads = disc_loss(disc, take(expert, e_idx), take(agent, idx),
                                          policy, r1_coef)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite discriminator loss: {info}")
            grads, _ = clip_global_norm(grads, max_grad_norm)
            optimizer.step(params, grads)
    return info


def logit_reward(y):
    """GAIL / AIRL reward ``log D - log(1 - D)``, i.e. the logit itself."""
    return np.asarray(y, dtype=np.float64)


def fairl_reward(y):
    """FAIRL reward ``-h * exp(h)``."""
    y = np.minimum(np.asarray(y, dtype=np.float64), 50.0)
    return -y * np.exp(y)


def adversarial_reward(disc: Discriminator, batch, policy=None, form: str = "logit",
                       cap: float = REWARD_CAP) -> np.ndarray:
    y = disc_logits(disc, batch, policy)
    r = fairl_reward(y) if form == "fairl" else logit_reward(y)
    return np.clip(r, -cap, cap)


class AdversarialProvider(RewardProvider):
    updates_online = True

    def __init__(self, tag: str, expert, rng: np.random.Generator, lr: float = 3e-4,
                 epochs: int = 5, r1_coef: float = 1.0, replay_multiplier: int = 3,
                 batch_size: int = 256, gamma: float = 0.99, reward_cap: float = REWARD_CAP,
                 max_grad_norm: float = 0.5, dtype=np.float64):
        if tag not in ("gail", "airl", "fairl"):
            raise ValueError(f"not an adversarial algorithm: {tag}")
        self.tag = tag
        self.expert = as_view(expert)
        self.disc = make_discriminator("airl" if tag == "airl" else "logit", self.expert, rng,
                                       gamma, dtype=dtype)
        self.optimizer = Adam(self.disc.arrays(), lr)
        self.replay = ImitationReplay(replay_multiplier)
        self.epochs, self.r1_coef, self.batch_size = epochs, r1_coef, batch_size
        self.reward_cap, self.max_grad_norm = reward_cap, max_grad_norm

    def update(self, batch: AgentBatch, policy, rng: np.random.Generator) -> dict:
        self.replay.push(batch)
        return disc_train(self.disc, self.expert, self.replay, self.optimizer, rng,
                          self.r1_coef, self.epochs, self.batch_size,
                          policy if self.tag == "airl" else None, self.max_grad_norm)

    def reward(self, batch: AgentBatch, policy) -> np.ndarray:
        return adversarial_reward(self.disc, batch, policy if self.tag == "airl" else None,
                                  "fairl" if self.tag == "fairl" else "logit", self.reward_cap)

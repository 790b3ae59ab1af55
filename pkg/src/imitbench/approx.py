"""Tanh multilayer perceptrons with hand-written reverse-mode gradients.

Everything trainable in the suite (policy mean, value function,
discriminators, RND networks) is an :class:`MlpParams`. Weight matrices are
stored as ``(fan_in, fan_out)`` so a batch of row vectors is propagated with
``x @ W + b``. Gradients come back in the same structure, which keeps the
optimiser and the global-norm clipper agnostic to what they are updating.

Besides the usual parameter gradients this module provides the input
gradient of a scalar head and its derivative with respect to the parameters
(a "double backward"), which is what the R1 penalty needs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError

LOG_2PI = math.log(2.0 * math.pi)
HIDDEN_SIZES = (256, 256)


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout: float = 0.0

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty and of equal length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i} input {w.shape[0]} does not chain "
                                 f"from previous output {self.weights[i - 1].shape[1]}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def dtype(self):
        return self.weights[0].dtype

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order (W0, b0, W1, b1, ...), by reference."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         self.dropout)

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(b) for b in self.biases], self.dropout)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_orthogonal(rows: int, cols: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    """Random ``rows x cols`` matrix with orthonormal rows or columns, scaled by ``gain``.

    Rows are orthonormal when ``rows <= cols``, columns otherwise.
    """
    if rows < 1 or cols < 1:
        raise ValueError("matrix dimensions must be >= 1")
    if gain <= 0:
        raise ValueError("gain must be positive")
    big, small = max(rows, cols), min(rows, cols)
    q, r = np.linalg.qr(rng.standard_normal((big, small)))
    # sign fix makes the draw uniform over the orthogonal group
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    if rows < cols:
        q = q.T
    return gain * q


def mlp_init(sizes, rng: np.random.Generator, hidden_gain: float = math.sqrt(2.0),
             output_gain: float = 1.0, dropout: float = 0.0, dtype=np.float64) -> MlpParams:
    """Orthogonally initialised tanh MLP with zero biases.

    ``sizes`` lists every layer width including input and output,
    e.g. ``(4, 256, 256, 2)``.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = output_gain if i == len(sizes) - 2 else hidden_gain
        # stored transposed: (fan_in, fan_out)
        weights.append(init_orthogonal(fan_out, fan_in, gain, rng).T.astype(dtype).copy())
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpParams(weights, biases, dropout)


def draw_dropout_masks(params: MlpParams, rng: np.random.Generator, batch: int | None = None):
    """Inverted-dropout masks for every hidden layer, or ``None`` when dropout is off.

    Each mask has shape ``(batch, width)`` (or ``(width,)`` when ``batch`` is
    None, i.e. one mask shared by every row) and holds ``0`` or ``1/(1-p)``.
    """
    p = params.dropout
    if p == 0.0:
        return None
    keep = 1.0 - p
    masks = []
    for w in params.weights[:-1]:
        shape = (w.shape[1],) if batch is None else (batch, w.shape[1])
        masks.append((rng.random(shape) < keep).astype(params.dtype) / keep)
    return masks


@dataclass
class _Cache:
    inputs: np.ndarray
    tanhs: list[np.ndarray] = field(default_factory=list)
    acts: list[np.ndarray] = field(default_factory=list)  # tanh * mask, fed forward
    masks: list[np.ndarray] | None = None
    squeeze: bool = False


def _check_masks(params: MlpParams, masks):
    if masks is None:
        return
    if params.dropout == 0.0:
        raise ValueError("dropout masks given for a network without dropout")
    if len(masks) != len(params.weights) - 1:
        raise ValueError("need one dropout mask per hidden layer")


def mlp_forward_cache(params: MlpParams, x, masks=None):
    """Forward pass that also returns the activations needed by the backward passes."""
    x = np.asarray(x, dtype=params.dtype)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValueError(f"input dimension {x.shape[-1]} does not match network input "
                         f"{params.in_dim}")
    _check_masks(params, masks)
    cache = _Cache(inputs=x, masks=masks, squeeze=squeeze)
    h = x
    for i in range(len(params.weights) - 1):
        t = np.tanh(h @ params.weights[i] + params.biases[i])
        cache.tanhs.append(t)
        h = t * masks[i] if masks is not None else t
        cache.acts.append(h)
    out = h @ params.weights[-1] + params.biases[-1]
    return (out[0] if squeeze else out), cache


def mlp_forward(params: MlpParams, x, masks=None) -> np.ndarray:
    """Evaluate the network on a vector or a batch of row vectors."""
    return mlp_forward_cache(params, x, masks)[0]


def mlp_backward(params: MlpParams, cache: _Cache, upstream, need_input_grad: bool = False):
    """Reverse-mode pass for ``sum(outputs * upstream)``.

    Returns ``(grads, input_grad)``; ``grads`` is an :class:`MlpParams`
    shaped like ``params`` and ``input_grad`` is ``None`` unless requested.
    """
    g = np.asarray(upstream, dtype=params.dtype)
    if cache.squeeze and g.ndim == 1:
        g = g[None, :]
    n_out = cache.inputs.shape[0]
    if g.shape != (n_out, params.out_dim):
        raise ValueError(f"upstream shape {g.shape} does not match outputs "
                         f"{(n_out, params.out_dim)}")
    n_layers = len(params.weights)
    dw = [None] * n_layers
    db = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        a_prev = cache.acts[i - 1] if i else cache.inputs
        dw[i] = a_prev.T @ g
        db[i] = g.sum(axis=0)
        if i == 0 and not need_input_grad:
            break
        g = g @ params.weights[i].T
        if i:
            if cache.masks is not None:
                g = g * cache.masks[i - 1]
            g = g * (1.0 - cache.tanhs[i - 1] ** 2)
    grads = MlpParams(dw, db, params.dropout)
    input_grad = None
    if need_input_grad:
        input_grad = g[0] if cache.squeeze else g
    return grads, input_grad


def mlp_gradients(params: MlpParams, inputs, upstream, masks=None) -> MlpParams:
    """Exact gradients of ``sum(mlp(inputs) * upstream)`` w.r.t. every parameter."""
    _, cache = mlp_forward_cache(params, inputs, masks)
    return mlp_backward(params, cache, upstream)[0]


def mlp_input_gradient(params: MlpParams, cache: _Cache):
    """Per-row gradient of a scalar-output network with respect to its input.

    Returns ``(grad_x, deltas)`` where ``deltas[l]`` is d(output)/d(pre-activation)
    of hidden layer ``l``; the deltas are reused by :func:`mlp_double_backward`.
    """
    if params.out_dim != 1:
        raise ValueError("input gradients are only defined here for scalar heads")
    if cache.masks is not None:
        raise ValueError("input-gradient path does not support dropout")
    n_hidden = len(params.weights) - 1
    deltas = [None] * n_hidden
    d = params.weights[-1][:, 0][None, :]
    for l in range(n_hidden - 1, -1, -1):
        d = d * (1.0 - cache.tanhs[l] ** 2)
        deltas[l] = d
        d = d @ params.weights[l].T
    return d, deltas


def mlp_double_backward(params: MlpParams, cache: _Cache, deltas, up_out, up_grad_x) -> MlpParams:
    """Parameter gradient of a loss depending on a scalar head and its input gradient.

    ``up_out`` is dL/d(output) per row, shape ``(B,)``; ``up_grad_x`` is
    dL/d(grad_x) per row, shape ``(B, in_dim)``.
    """
    ws, n_hidden = params.weights, len(params.weights) - 1
    dw = [np.zeros_like(w) for w in ws]
    db = [np.zeros_like(b) for b in params.biases]
    w_out = ws[-1][:, 0]
    up_out = np.asarray(up_out, dtype=params.dtype).reshape(-1)
    up_grad_x = np.asarray(up_grad_x, dtype=params.dtype)

    # back through grad_x = deltas[0] @ W0.T, then the delta recursion
    g_act = [None] * n_hidden  # dL/d(tanh output) collected from the 1 - t^2 factors
    dw[0] += up_grad_x.T @ deltas[0]
    g_delta = up_grad_x @ ws[0]
    for l in range(n_hidden):
        t = cache.tanhs[l]
        d_l = 1.0 - t ** 2
        if l < n_hidden - 1:
            carried = deltas[l + 1] @ ws[l + 1].T
            g_d = g_delta * carried
            g_carried = g_delta * d_l
            dw[l + 1] += g_carried.T @ deltas[l + 1]
            g_delta = g_carried @ ws[l + 1]
        else:
            g_d = g_delta * w_out[None, :]
            dw[-1][:, 0] += (g_delta * d_l).sum(axis=0)
        g_act[l] = -2.0 * t * g_d

    # ordinary backward of the scalar output, merged with the collected terms
    dw[-1] += cache.acts[-1].T @ up_out[:, None]
    db[-1] += up_out.sum(keepdims=True)
    g = up_out[:, None] * w_out[None, :] + g_act[-1]
    for l in range(n_hidden - 1, -1, -1):
        gz = g * (1.0 - cache.tanhs[l] ** 2)
        a_prev = cache.acts[l - 1] if l else cache.inputs
        dw[l] += a_prev.T @ gz
        db[l] += gz.sum(axis=0)
        if l:
            g = gz @ ws[l].T + g_act[l - 1]
    return MlpParams(dw, db, params.dropout)


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))


def clip_global_norm(grads, max_norm: float = 0.5):
    """Rescale a list of gradient arrays so their joint l2 norm is at most ``max_norm``.

    Returns ``(clipped, norm_before)``; the input arrays are not modified.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return list(grads), norm
    scale = max_norm / norm
    return [g * scale for g in grads], norm


class Adam:
    """Adaptive moment estimation over a fixed list of parameter arrays (updated in place)."""

    def __init__(self, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter / gradient list does not match optimiser state")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NumericalError("non-finite gradient passed to optimiser")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# --------------------------------------------------------------------------
# Gaussian policy with state-independent standard deviation


@dataclass
class GaussianPolicy:
    mean: MlpParams
    log_std: np.ndarray

    @property
    def action_dim(self) -> int:
        return self.log_std.shape[0]

    @property
    def state_dim(self) -> int:
        return self.mean.in_dim

    def arrays(self) -> list[np.ndarray]:
        return self.mean.arrays() + [self.log_std]

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.mean.copy(), self.log_std.copy())

    def std(self) -> np.ndarray:
        s = np.exp(self.log_std)
        assert np.all(s > 0), "policy standard deviation must be positive"
        return s


def make_policy(state_dim: int, action_dim: int, rng: np.random.Generator,
                hidden=HIDDEN_SIZES, log_std_init: float = -2.0, dropout: float = 0.0,
                dtype=np.float64) -> GaussianPolicy:
    mean = mlp_init((state_dim, *hidden, action_dim), rng, output_gain=0.01,
                    dropout=dropout, dtype=dtype)
    return GaussianPolicy(mean, np.full(action_dim, log_std_init, dtype=dtype))


def make_value_net(state_dim: int, rng: np.random.Generator, hidden=HIDDEN_SIZES,
                   dtype=np.float64) -> MlpParams:
    return mlp_init((state_dim, *hidden, 1), rng, output_gain=1.0, dtype=dtype)


def gaussian_log_prob(mu, log_std, actions) -> np.ndarray:
    """Diagonal Gaussian log-density, summed over the last axis."""
    z = (actions - mu) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def policy_log_prob(policy: GaussianPolicy, states, actions, masks=None) -> np.ndarray:
    mu = mlp_forward(policy.mean, states, masks)
    return gaussian_log_prob(mu, policy.log_std, np.asarray(actions, dtype=mu.dtype))


def policy_entropy(policy: GaussianPolicy) -> float:
    """Closed-form entropy; independent of the state because the std is."""
    return float(np.sum(policy.log_std + 0.5 * (LOG_2PI + 1.0)))


def policy_mode(policy: GaussianPolicy, state) -> np.ndarray:
    return mlp_forward(policy.mean, state)


def policy_sample(policy: GaussianPolicy, state, rng: np.random.Generator) -> np.ndarray:
    mu = mlp_forward(policy.mean, state)
    return mu + policy.std() * rng.standard_normal(mu.shape)


def log_prob_backward(policy: GaussianPolicy, cache, mu, actions, upstream,
                      need_input_grad: bool = False):
    """Gradients of ``sum(upstream * log pi(a|s))``.

    ``cache`` and ``mu`` come from ``mlp_forward_cache(policy.mean, states)``.
    Returns ``(mean_grads, log_std_grad, state_grad)``.
    """
    upstream = np.asarray(upstream, dtype=mu.dtype)
    inv_var = np.exp(-2.0 * policy.log_std)
    diff = actions - mu
    d_mu = upstream[:, None] * diff * inv_var
    d_log_std = np.sum(upstream[:, None] * (diff * diff * inv_var - 1.0), axis=0)
    grads, state_grad = mlp_backward(policy.mean, cache, d_mu, need_input_grad)
    return grads, d_log_std, state_grad


def check_finite(value, what: str):
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"non-finite {what}")
    return value

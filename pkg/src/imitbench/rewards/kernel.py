"""Generative moment matching imitation (GMMIL) with a two-bandwidth Gaussian kernel.

``k(x, y) = exp(-|x - y|^2 / sigma1) + exp(-|x - y|^2 / sigma2)``

``sigma1`` is the median pairwise squared distance over expert and
initial-policy pairs; ``sigma2`` is the median pairwise (plain) distance
over expert pairs. Both are fixed after the first rollout.

Pairwise differences are formed by broadcasting, which is exact (no
``|x|^2 + |y|^2 - 2xy`` cancellation) but holds an ``N x M x d`` array; the
cost is O(NM) in time and memory per reward batch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from ..errors import ConfigError
from ..rl import AgentBatch
from .base import InputScaler, RewardProvider, as_view

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KernelConfig:
    sigma1: float
    sigma2: float
    self_similarity: bool = True

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ConfigError("kernel bandwidths must be positive")


def median_heuristic(points, squared: bool) -> float:
    """Median over unordered distinct pairs of (squared) Euclidean distances.

    A zero median (many duplicate points) falls back to the smallest non-zero
    pairwise distance; if every pair coincides a :class:`ConfigError` is raised.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 2:
        raise ConfigError("median heuristic needs at least two points")
    d = pdist(pts, "sqeuclidean" if squared else "euclidean")
    med = float(np.median(d))
    if med > 0:
        return med
    nonzero = d[d > 0]
    if nonzero.size == 0:
        raise ConfigError("degenerate bandwidth: all points coincide")
    log.warning("median heuristic hit zero; falling back to the smallest non-zero distance")
    return float(nonzero.min())


def gmmil_init(expert_points, initial_points, self_similarity: bool = True) -> KernelConfig:
    expert_points = np.asarray(expert_points, dtype=np.float64)
    union = np.concatenate([expert_points, np.asarray(initial_points, dtype=np.float64)])
    return KernelConfig(median_heuristic(union, squared=True),
                        median_heuristic(expert_points, squared=False), self_similarity)


def sq_dists(x, y) -> np.ndarray:
    diff = np.asarray(x, dtype=np.float64)[:, None, :] - np.asarray(y, dtype=np.float64)[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kernel_matrix(x, y, cfg: KernelConfig) -> np.ndarray:
    d2 = sq_dists(x, y)
    return np.exp(-d2 / cfg.sigma1) + np.exp(-d2 / cfg.sigma2)


def gmmil_reward(x, expert, agent, cfg: KernelConfig) -> np.ndarray:
    """Reward of each row of ``x``: mean kernel to expert minus (optionally) mean kernel to agent."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    r = kernel_matrix(x, expert, cfg).mean(axis=1)
    if cfg.self_similarity:
        r = r - kernel_matrix(x, agent, cfg).mean(axis=1)
    return r


def mmd2(p, q, cfg: KernelConfig) -> float:
    """Biased (V-statistic) squared MMD between two sample sets."""
    return float(kernel_matrix(p, p, cfg).mean() + kernel_matrix(q, q, cfg).mean()
                 - 2.0 * kernel_matrix(p, q, cfg).mean())


class GmmilProvider(RewardProvider):
    tag = "gmmil"

    def __init__(self, expert, self_similarity: bool = True):
        self.expert = as_view(expert)
        self.scaler = InputScaler(self.expert.pairs)
        self.expert_points = self.scaler(self.expert.pairs)
        self.self_similarity = self_similarity
        self.config: KernelConfig | None = None

    @property
    def penalises_self(self) -> bool:
        return self.self_similarity

    def start(self, expert, first_batch: AgentBatch) -> None:
        self.config = gmmil_init(self.expert_points, self.scaler(first_batch.pairs),
                                 self.self_similarity)

    def reward(self, batch: AgentBatch, policy=None) -> np.ndarray:
        if self.config is None:
            raise RuntimeError("GMMIL bandwidths are set from the first rollout; call start()")
        x = self.scaler(batch.pairs)
        return gmmil_reward(x, self.expert_points, x, self.config)

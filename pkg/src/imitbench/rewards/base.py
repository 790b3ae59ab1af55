"""Common provider interface and the algorithm property table."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import ExpertView
from ..rl import AgentBatch

ALGORITHMS = ("bc", "gail", "airl", "fairl", "gmmil", "red", "dril")


@dataclass(frozen=True)
class Properties:
    """One row of the imitation-algorithm property table.

    ``fixed_reward`` is ``None`` for BC, which has no learned reward at all.
    ``conditional`` marks algorithms that model p(a|s) instead of p(s, a).
    """
    matches_expert: bool
    penalises_self: bool
    fixed_reward: bool | None
    conditional: bool = False


TAXONOMY = {
    "bc": Properties(True, False, None, conditional=True),
    "gail": Properties(True, True, False),
    "airl": Properties(True, True, False),
    "fairl": Properties(True, True, False),
    "gmmil": Properties(True, True, True),   # self-similarity term is optional
    "red": Properties(True, False, True),
    "dril": Properties(True, False, True, conditional=True),
}


class InputScaler:
    """Standardises inputs with expert-data statistics (unit std where the data is constant)."""

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=np.float64)
        self.mean = data.mean(axis=0)
        std = data.std(axis=0)
        self.std = np.where(std > 1e-6, std, 1.0)

    def columns(self, sl: slice) -> "InputScaler":
        sub = object.__new__(InputScaler)
        sub.mean, sub.std = self.mean[sl], self.std[sl]
        return sub

    def __call__(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


class RewardProvider:
    """Turns reward-free agent experience into imitation rewards.

    Providers only ever see :class:`ExpertView` and :class:`AgentBatch`,
    neither of which carries environment rewards.
    """

    tag: str = ""
    requires_pretraining: bool = False
    updates_online: bool = False

    @property
    def penalises_self(self) -> bool:
        return TAXONOMY[self.tag].penalises_self

    def pretrain(self, expert: ExpertView, rng: np.random.Generator) -> dict:
        return {}

    def start(self, expert: ExpertView, first_batch: AgentBatch) -> None:
        """Hook run once with the first agent rollout, before any reward is requested."""

    def update(self, batch: AgentBatch, policy, rng: np.random.Generator) -> dict:
        return {}

    def reward(self, batch: AgentBatch, policy) -> np.ndarray:
        raise NotImplementedError


def as_view(expert) -> ExpertView:
    if not isinstance(expert, ExpertView):
        raise TypeError("imitation code only accepts the reward-free ExpertView; "
                        "call dataset.view() first")
    return expert


def iterate_minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]

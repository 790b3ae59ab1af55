"""Expert trajectories: recording, subsampling, statistics, and the ILDS1 file format.

ILDS1 layout (little-endian)::

    b"ILDS" | u8 version=1 | u32 state_dim | u32 action_dim
    | u64 n_transitions | u64 n_trajectories | u64 start_offset * n_trajectories
    | n_transitions * (f32 state[sd], f32 action[ad], f32 reward, f32 next_state[sd], u8 terminal)
    [ | b"ILDM" | u32 length | utf-8 JSON metadata ]

The trailing metadata block is optional and carries the source environment
and the subsample rate. Rewards that were never recorded are stored as NaN.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .approx import GaussianPolicy, policy_mode, policy_sample
from .envs import EnvSpec, env_reset, env_step
from .errors import DatasetFormatError

MAGIC = b"ILDS"
META_MAGIC = b"ILDM"
VERSION = 1
_HEAD = struct.Struct("<4sBIIQQ")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass(frozen=True)
class ExpertView:
    """Reward-free view of a dataset; the only form imitation code ever receives."""
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self):
        return self.states.shape[0]

    @property
    def pairs(self) -> np.ndarray:
        """State-action rows ``[s, a]``."""
        return np.concatenate([self.states, self.actions], axis=1)


@dataclass(eq=False)
class TrajectoryDataset:
    states: np.ndarray       # (n, sd) float32
    actions: np.ndarray      # (n, ad) float32
    rewards: np.ndarray      # (n,) float32, NaN where unrecorded
    next_states: np.ndarray  # (n, sd) float32
    terminals: np.ndarray    # (n,) bool
    starts: np.ndarray       # (n_traj,) uint64 trajectory start offsets
    env_name: str = ""
    subsample_rate: int = 1

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=np.float32)
        self.actions = np.ascontiguousarray(self.actions, dtype=np.float32)
        self.rewards = np.ascontiguousarray(self.rewards, dtype=np.float32)
        self.next_states = np.ascontiguousarray(self.next_states, dtype=np.float32)
        self.terminals = np.ascontiguousarray(self.terminals, dtype=bool)
        self.starts = np.ascontiguousarray(self.starts, dtype=np.uint64)
        n = self.states.shape[0]
        if self.states.ndim != 2 or self.actions.ndim != 2 or self.actions.shape[0] != n:
            raise ValueError("states / actions must be 2-D with matching length")
        if self.next_states.shape != self.states.shape:
            raise ValueError("next_states must match states in shape")
        if self.rewards.shape != (n,) or self.terminals.shape != (n,):
            raise ValueError("rewards / terminals must be 1-D of transition count")
        if n == 0 and self.starts.size:
            raise ValueError("empty dataset cannot have trajectories")
        if n and (self.starts.size == 0 or self.starts[0] != 0
                  or np.any(np.diff(self.starts.astype(np.int64)) <= 0)
                  or int(self.starts[-1]) >= n):
            raise ValueError("trajectory starts must begin at 0, increase strictly, "
                             "and lie inside the transition list")
        if self.subsample_rate < 1:
            raise ValueError("subsample rate must be >= 1")

    def __len__(self):
        return self.states.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    @property
    def n_trajectories(self) -> int:
        return int(self.starts.size)

    def trajectory_slices(self) -> list[slice]:
        bounds = [int(s) for s in self.starts] + [len(self)]
        return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]

    def transition(self, i: int) -> Transition:
        return Transition(self.states[i], self.actions[i], float(self.rewards[i]),
                          self.next_states[i], bool(self.terminals[i]))

    def view(self) -> ExpertView:
        return ExpertView(self.states.astype(np.float64), self.actions.astype(np.float64),
                          self.next_states.astype(np.float64), self.terminals.copy())

    def same_as(self, other: "TrajectoryDataset") -> bool:
        """Bit-level equality of every field (NaN rewards compare by bit pattern)."""
        return (self.env_name == other.env_name
                and self.subsample_rate == other.subsample_rate
                and all(a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
                        for a, b in zip(self._arrays(), other._arrays())))

    def _arrays(self):
        return (self.states, self.actions, self.rewards, self.next_states, self.terminals,
                self.starts)

    @classmethod
    def empty(cls, state_dim: int, action_dim: int, env_name: str = "") -> "TrajectoryDataset":
        return cls(np.zeros((0, state_dim)), np.zeros((0, action_dim)), np.zeros(0),
                   np.zeros((0, state_dim)), np.zeros(0, bool), np.zeros(0, np.uint64), env_name)

    @classmethod
    def from_trajectories(cls, trajectories: list[list[Transition]], env_name: str = "",
                          subsample_rate: int = 1) -> "TrajectoryDataset":
        flat = [t for traj in trajectories for t in traj]
        if not flat:
            raise ValueError("no transitions; use TrajectoryDataset.empty")
        starts = np.cumsum([0] + [len(t) for t in trajectories[:-1]])
        return cls(np.stack([t.state for t in flat]), np.stack([t.action for t in flat]),
                   np.array([t.reward for t in flat]), np.stack([t.next_state for t in flat]),
                   np.array([t.terminal for t in flat]), starts, env_name, subsample_rate)


def episode_seeds(seed: int, episodes: int) -> list[np.random.SeedSequence]:
    """Per-episode seed sequences shared by expert recording and evaluation."""
    return np.random.SeedSequence(seed).spawn(episodes)


def record_expert(policy: GaussianPolicy, env: EnvSpec, episodes: int, seed: int,
                  deterministic: bool = False) -> TrajectoryDataset:
    """Roll out ``policy`` for complete episodes, keeping the true rewards."""
    if episodes < 1:
        raise ValueError("need at least one episode")
    trajectories = []
    for ss in episode_seeds(seed, episodes):
        reset_rng, act_rng = (np.random.default_rng(s) for s in ss.spawn(2))
        state, obs = env_reset(env, reset_rng)
        traj = []
        done = False
        while not done:
            if deterministic:
                a = policy_mode(policy, obs)
            else:
                a = policy_sample(policy, obs, act_rng)
            a = env.clamp(a)
            state, nxt, r, done = env_step(state, a)
            traj.append(Transition(obs, a, r, nxt, state.terminated))
            obs = nxt
        trajectories.append(traj)
    return TrajectoryDataset.from_trajectories(trajectories, env.name)


def subsample(dataset: TrajectoryDataset, rate: int = 20) -> TrajectoryDataset:
    """Keep every ``rate``-th transition of each trajectory, starting at its first."""
    if rate < 1:
        raise ValueError("subsample rate must be >= 1")
    keep, starts = [], []
    for sl in dataset.trajectory_slices():
        idx = np.arange(sl.start, sl.stop, rate)
        starts.append(sum(len(k) for k in keep))
        keep.append(idx)
    if not keep:
        return TrajectoryDataset.empty(dataset.state_dim, dataset.action_dim, dataset.env_name)
    idx = np.concatenate(keep)
    return TrajectoryDataset(dataset.states[idx], dataset.actions[idx], dataset.rewards[idx],
                             dataset.next_states[idx], dataset.terminals[idx], starts,
                             dataset.env_name, dataset.subsample_rate * rate)


def trajectory_returns(dataset: TrajectoryDataset) -> np.ndarray:
    return np.array([float(np.sum(dataset.rewards[sl], dtype=np.float64))
                     for sl in dataset.trajectory_slices()])


def dataset_stats(dataset: TrajectoryDataset) -> tuple[float, float]:
    """Mean and population std of the undiscounted per-trajectory return."""
    if dataset.n_trajectories == 0:
        raise ValueError("dataset has no trajectories")
    if np.any(np.isnan(dataset.rewards)):
        raise ValueError("dataset does not carry recorded rewards")
    returns = trajectory_returns(dataset)
    return float(returns.mean()), float(returns.std())


def _row_dtype(sd: int, ad: int) -> np.dtype:
    return np.dtype([("s", "<f4", (sd,)), ("a", "<f4", (ad,)), ("r", "<f4"),
                     ("s2", "<f4", (sd,)), ("done", "u1")])


def to_bytes(dataset: TrajectoryDataset) -> bytes:
    sd, ad, n = dataset.state_dim, dataset.action_dim, len(dataset)
    rows = np.empty(n, dtype=_row_dtype(sd, ad))
    rows["s"], rows["a"], rows["r"] = dataset.states, dataset.actions, dataset.rewards
    rows["s2"], rows["done"] = dataset.next_states, dataset.terminals
    meta = json.dumps({"env": dataset.env_name, "subsample_rate": dataset.subsample_rate},
                      sort_keys=True).encode()
    return b"".join([
        _HEAD.pack(MAGIC, VERSION, sd, ad, n, dataset.n_trajectories),
        dataset.starts.astype("<u8").tobytes(),
        rows.tobytes(),
        META_MAGIC, struct.pack("<I", len(meta)), meta,
    ])


def from_bytes(blob: bytes) -> TrajectoryDataset:
    if len(blob) < _HEAD.size:
        raise DatasetFormatError("file too short for an ILDS1 header")
    magic, version, sd, ad, n, n_traj = _HEAD.unpack_from(blob)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported ILDS version {version}")
    if sd < 1 or ad < 1:
        raise DatasetFormatError("state and action dimensions must be >= 1")
    row = _row_dtype(sd, ad)
    offset = _HEAD.size
    body = offset + 8 * n_traj + row.itemsize * n
    if len(blob) < body:
        raise DatasetFormatError(f"truncated file: header implies {body} bytes, got {len(blob)}")
    starts = np.frombuffer(blob, "<u8", n_traj, offset).astype(np.uint64)
    rows = np.frombuffer(blob, row, n, offset + 8 * n_traj)
    meta = {}
    rest = blob[body:]
    if rest:
        if rest[:4] != META_MAGIC or len(rest) < 8:
            raise DatasetFormatError("payload length inconsistent with header")
        (length,) = struct.unpack_from("<I", rest, 4)
        if len(rest) != 8 + length:
            raise DatasetFormatError("metadata block length mismatch")
        try:
            meta = json.loads(rest[8:].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DatasetFormatError(f"unreadable metadata: {exc}") from None
    try:
        return TrajectoryDataset(rows["s"].reshape(n, sd), rows["a"].reshape(n, ad), rows["r"],
                                 rows["s2"].reshape(n, sd), rows["done"].astype(bool), starts,
                                 meta.get("env", ""), int(meta.get("subsample_rate", 1)))
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from None


def save(dataset: TrajectoryDataset, path) -> None:
    Path(path).write_bytes(to_bytes(dataset))


def load(path) -> TrajectoryDataset:
    return from_bytes(Path(path).read_bytes())

import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imitbench import dataset as ds
from imitbench.approx import make_policy
from imitbench.dataset import Transition, TrajectoryDataset
from imitbench.envs import make_env
from imitbench.errors import DatasetFormatError
from imitbench.harness.training import evaluate

from strategies import random_dataset


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_is_bit_exact(seed):
    d = random_dataset(np.random.default_rng(seed))
    back = ds.from_bytes(ds.to_bytes(d))
    assert back.same_as(d)
    assert ds.to_bytes(back) == ds.to_bytes(d)


def test_round_trip_through_file(tmp_path):
    d = random_dataset(np.random.default_rng(5))
    ds.save(d, tmp_path / "d.ilds")
    assert ds.load(tmp_path / "d.ilds").same_as(d)


def test_empty_dataset_round_trip():
    d = TrajectoryDataset.empty(4, 2, "pointmass")
    back = ds.from_bytes(ds.to_bytes(d))
    assert len(back) == 0 and back.state_dim == 4 and back.action_dim == 2
    assert back.same_as(d)


def test_header_layout_is_little_endian():
    blob = ds.to_bytes(random_dataset(np.random.default_rng(1)))
    magic, version, sd, ad, n, nt = struct.unpack_from("<4sBIIQQ", blob)
    assert magic == b"ILDS" and version == 1


def _blob():
    return bytearray(ds.to_bytes(random_dataset(np.random.default_rng(2), max_traj=3)))


@pytest.mark.parametrize("corrupt", [
    lambda b: b.__setitem__(slice(0, 4), b"ILDX"),           # magic
    lambda b: b.__setitem__(4, 2),                           # version
    lambda b: b.__setitem__(slice(5, 9), struct.pack("<I", 0)),
    lambda b: b.__setitem__(slice(13, 21), struct.pack("<Q", 10**6)),   # transition count
    lambda b: b.__setitem__(slice(21, 29), struct.pack("<Q", 10**6)),   # trajectory count
    lambda b: b.__delitem__(slice(len(b) - 40, len(b))),     # truncation
    lambda b: b.__delitem__(slice(10, len(b))),
    lambda b: b.extend(b"junk"),
])
def test_corrupted_files_are_rejected(corrupt):
    b = _blob()
    corrupt(b)
    with pytest.raises(DatasetFormatError):
        ds.from_bytes(bytes(b))


def test_non_increasing_boundaries_are_rejected():
    b = bytearray(ds.to_bytes(_linear([3, 4])))
    struct.pack_into("<Q", b, 29 + 8, 0)
    with pytest.raises(DatasetFormatError):
        ds.from_bytes(bytes(b))


def _linear(n_traj_lengths):
    trajs = []
    k = 0
    for length in n_traj_lengths:
        traj = []
        for i in range(length):
            traj.append(Transition(np.array([k, 0.0]), np.array([i]), 1.0,
                                   np.array([k + 1.0, 0.0]), i == length - 1))
            k += 1
        trajs.append(traj)
    return TrajectoryDataset.from_trajectories(trajs, "toy")


def test_subsample_picks_every_rate_th_index():
    d = ds.subsample(_linear([100]), 20)
    np.testing.assert_array_equal(d.actions[:, 0], [0, 20, 40, 60, 80])
    assert d.subsample_rate == 20


def test_subsample_is_per_trajectory():
    d = ds.subsample(_linear([30, 50]), 20)
    assert len(d) == 5
    np.testing.assert_array_equal(d.starts, [0, 2])
    np.testing.assert_array_equal(d.actions[:, 0], [0, 20, 0, 20, 40])


def test_subsample_rate_one_is_identity():
    d = _linear([7, 3])
    assert ds.subsample(d, 1).same_as(d)
    with pytest.raises(ValueError):
        ds.subsample(d, 0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 25))
def test_subsample_keeps_order_within_trajectories(seed, rate):
    d = random_dataset(np.random.default_rng(seed))
    sub = ds.subsample(d, rate)
    assert sub.n_trajectories == d.n_trajectories
    for full, part in zip(d.trajectory_slices(), sub.trajectory_slices()):
        expected = d.states[full][::rate]
        np.testing.assert_array_equal(sub.states[part], expected)


def test_dataset_stats():
    d = TrajectoryDataset.from_trajectories(
        [[Transition(np.zeros(1), np.zeros(1), 1.0, np.zeros(1), False)],
         [Transition(np.zeros(1), np.zeros(1), 1.0, np.zeros(1), False),
          Transition(np.zeros(1), np.zeros(1), 2.0, np.zeros(1), False)]])
    assert ds.dataset_stats(d) == (2.0, 1.0)
    single = TrajectoryDataset.from_trajectories([[d.transition(0)]])
    assert ds.dataset_stats(single)[1] == 0.0
    no_rewards = TrajectoryDataset(d.states, d.actions, np.full(3, np.nan), d.next_states,
                                   d.terminals, d.starts)
    with pytest.raises(ValueError):
        ds.dataset_stats(no_rewards)


def test_view_strips_rewards():
    view = random_dataset(np.random.default_rng(4)).view()
    assert not hasattr(view, "rewards")


@pytest.fixture(scope="module")
def small_policy():
    return make_policy(4, 2, np.random.default_rng(0), hidden=(16, 16))


def test_record_one_episode(small_policy):
    d = ds.record_expert(small_policy, make_env("pointmass"), 1, seed=3)
    assert len(d) == 200 and d.n_trajectories == 1
    assert np.all(np.abs(d.actions) <= 1.0)
    with pytest.raises(ValueError):
        ds.record_expert(small_policy, make_env("pointmass"), 0, seed=3)


def test_recording_is_deterministic(small_policy):
    env = make_env("pointmass")
    a = ds.record_expert(small_policy, env, 3, seed=9)
    b = ds.record_expert(small_policy, env, 3, seed=9)
    assert ds.to_bytes(a) == ds.to_bytes(b)


def test_recorded_returns_match_evaluation(small_policy):
    env = make_env("pointmass")
    d = ds.record_expert(small_policy, env, 6, seed=21, deterministic=True)
    res = evaluate(small_policy, env, 6, seed=21)
    # rewards are stored as float32, so agree to single precision
    np.testing.assert_allclose(ds.trajectory_returns(d), res.returns, rtol=1e-5)
    mean, std = ds.dataset_stats(d)
    assert mean == pytest.approx(res.mean, rel=1e-5)

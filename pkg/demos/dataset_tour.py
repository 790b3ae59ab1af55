"""Record a handful of demonstrations, save them, reload and subsample.

    python3 demos/dataset_tour.py
"""
import tempfile
from pathlib import Path

import numpy as np

from imitbench import dataset as ds
from imitbench.approx import make_policy
from imitbench.envs import make_env

env = make_env("pendulum")
policy = make_policy(env.state_dim, env.action_dim, np.random.default_rng(0))
data = ds.record_expert(policy, env, episodes=4, seed=1)
mean, std = ds.dataset_stats(data)
print(f"recorded {len(data)} transitions, return {mean:.1f} ± {std:.1f}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "pendulum.ilds"
    ds.save(data, path)
    print(f"file size {path.stat().st_size} bytes")
    again = ds.load(path)
    assert ds.to_bytes(again) == ds.to_bytes(data)

thin = ds.subsample(data, 20)
print(f"every 20th transition: {len(thin)} remain")
view = thin.view()
print(f"training view: states {view.states.shape}, actions {view.actions.shape}, no rewards")

"""A minute-scale version of the whole benchmark on PointMass.

Trains a small PPO expert, records demonstrations, then fits BC and GAIL
on them and compares the final evaluation returns. Network sizes and step
counts are far below the standard settings, so expect rough numbers.

    python3 demos/tiny_pipeline.py
"""
import tempfile
from pathlib import Path

from imitbench import dataset as ds
from imitbench.envs import make_env
from imitbench.harness.config import RunConfig
from imitbench.harness.training import evaluate, load_expert, run_training, train_expert, zero_action_return

small = dict(hidden_size=32, rollout_length=1024, eval_interval=4096, eval_episodes=10,
             strict=False)
env = make_env("pointmass")

expert_run = train_expert(RunConfig(algo="ppo", steps=40_000, **small), quality=0.75)
print(f"expert checkpoint at step {expert_run.checkpoint_step}, score {expert_run.score:.2f}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "pm.ilds"
    ds.save(ds.record_expert(expert_run.policy, env, 25, seed=1), path)
    zero = zero_action_return(env, 10, seed=12345)
    ref = evaluate(expert_run.policy, env, 10, 12345).mean
    print(f"zero action {zero:.1f}, expert {ref:.1f}")
    for algo in ("bc", "gail"):
        cfg = RunConfig(algo=algo, dataset=str(path), steps=40_000, **small)
        result = run_training(cfg, load_expert(cfg))
        print(f"{algo}: final return {result.final.mean:.1f}")

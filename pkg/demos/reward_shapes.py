"""How each reward construction responds to its input.

Prints the adversarial reward as a function of the discriminator logit, the
RED reward as a function of the prediction error, and the GMMIL reward for
points near and far from a small expert cloud.

    python3 demos/reward_shapes.py
"""
import numpy as np

from imitbench.rewards import fairl_reward, gmmil_init, gmmil_reward, logit_reward
from imitbench.rewards.red import red_reward_from_error

print("logit   GAIL/AIRL   FAIRL")
for h in (-4.0, -1.0, 0.0, 1.0, 2.0):
    print(f"{h:5.1f}   {float(logit_reward(h)):9.3f}   {float(fairl_reward(h)) + 0.0:7.3f}")

print("\nsquared error   RED reward (sigma = 1)")
for e in (0.0, 0.5, 1.0, 2.0, 5.0):
    print(f"{e:13.1f}   {float(red_reward_from_error(np.array([e]), 1.0)[0]):.4f}")

rng = np.random.default_rng(0)
expert = rng.normal(size=(64, 3))
agent = rng.normal(loc=2.0, size=(64, 3))
kcfg = gmmil_init(expert, agent)
probes = np.array([[0.0, 0.0, 0.0], [2.0, 2.0, 2.0], [6.0, 6.0, 6.0]])
print(f"\nGMMIL bandwidths: sigma1={kcfg.sigma1:.3f} sigma2={kcfg.sigma2:.3f}")
for p, r in zip(probes, gmmil_reward(probes, expert, agent, kcfg)):
    print(f"probe {p} -> reward {r:+.4f}")

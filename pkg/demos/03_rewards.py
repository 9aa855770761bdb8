"""
Twelve reward signals over the same episode
===========================================

Every decision window yields all twelve reward values; only one of them
would be used to train a given agent. Here a short medium-demand episode
alternates stages every other decision.
"""
from junction_rl.config import ExperimentConfig
from junction_rl.environment import JunctionEnv
from junction_rl.rewards import RewardKind

env = JunctionEnv(ExperimentConfig(), record=True, episode_seconds=240.0)
env.reset("medium", 3)
n = 0
while not env.done:
    env.step(n // 2 % 2)
    n += 1

kinds = list(RewardKind)
print(f"{len(env.windows)} decision windows; showing the last four")
print(f"{'reward':24s}" + "".join(f"{f'({w.t_p:.1f},{w.t:.1f}]':>14s}" for w in env.windows[-4:]))
for kind in kinds:
    print(f"{kind.value:24s}" + "".join(f"{w.rewards[kind]:14.3f}" for w in env.windows[-4:]))
print("demand estimate at the end:", round(env.windows[-1].d_hat, 3), "veh/s")

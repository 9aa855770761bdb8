"""
A DQN on a one-state bandit
===========================

With a constant state and rewards 0 or 1 per action the optimal greedy
choice is obvious, which makes this a quick end-to-end check of replay,
target network and Adam updates. A small network keeps it fast.
"""
import numpy as np

from junction_rl import neural
from junction_rl.agent import BanditEnv, DQNAgent, epsilon_at, run_training_episode
from junction_rl.config import AgentConfig

cfg = AgentConfig(hidden=(32, 32), lr=1e-3, batch_size=16, memory_capacity=500)
env = BanditEnv(rewards=(0.0, 1.0), state_dim=4)
agent = DQNAgent.create(env.state_dim, env.n_actions, cfg, seed=0)

for ep in range(150):
    log = run_training_episode(env, agent, epsilon_at(ep, 150, cfg), None, ep)
    if ep % 30 == 0 or ep == 149:
        q = neural.q_values(agent.params, env.reset())
        print(f"episode {ep:3d}  eps {log.epsilon:.2f}  return {log.cumulative_reward:4.0f}  Q = {np.round(q, 3)}")

# with gamma = 0.8 the fixed point of action 1 is 1 / (1 - 0.8) = 5
print("greedy action:", agent.act(env.reset(), 0.0))

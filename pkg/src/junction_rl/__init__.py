"""Deep Q-learning for a signalised four-arm junction.

Modules
-------
config
    Experiment configuration and YAML loading.
sim_core
    Microscopic car-following simulation with Poisson demand.
signal_control
    Safety-constrained stage controller (minimum green, intergreens, paths).
sensing
    Detector-zone readings and per-window vehicle statistics.
rewards
    The twelve reward functions and the demand estimate.
neural
    Dense Q-network, Adam and the checkpoint format.
environment
    Decision-point environment around the simulator and controller.
agent
    Replay memory, epsilon-greedy acting and the DQN update.
baselines
    Max Occupancy and System D reference controllers.
harness
    Training runs, paired evaluation and reports.
"""
from .config import ExperimentConfig, load_config
from .environment import JunctionEnv
from .rewards import RewardKind

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "JunctionEnv", "RewardKind", "load_config", "__version__"]

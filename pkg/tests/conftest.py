import io

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from junction_rl.config import ExperimentConfig
from junction_rl.environment import JunctionEnv

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=50
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cfg():
    return ExperimentConfig()


def random_policy(seed):
    rng = np.random.default_rng(seed)
    return lambda env: int(rng.integers(env.n_actions))


@pytest.fixture(scope="session")
def recorded_episode(cfg):
    """A medium-demand episode under random decisions, with full trace and all rewards."""
    env = JunctionEnv(cfg, record=True, episode_seconds=300.0)
    env.reset("medium", 7)
    pol = random_policy(3)
    done = env.done
    while not done:
        _, _, done, _ = env.step(pol(env))
    buf = io.StringIO()
    env.net.trace.write_csv(buf)
    return env, buf.getvalue()


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])

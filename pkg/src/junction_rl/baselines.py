"""Reference controllers: longest-queue-first and System D vehicle actuation.

Both are pure decision rules evaluated at the same decision points as the
learning agent, and act through the same controller, so they face the same
minimum green, intergreen and stage-sequence constraints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .config import BaselineConfig

EXTEND, SWITCH = "extend", "switch"


def max_occupancy_decide(queues: dict[int, int], current: int) -> int:
    """Stage with the largest queue; a tie keeps the current stage."""
    best = max(queues.values())
    if queues.get(current) == best:
        return current
    return min(s for s, q in queues.items() if q == best)


@dataclass(frozen=True)
class SystemDConfig:
    gap_timeout: float = 1.5
    max_green: dict[int, float] = field(default_factory=lambda: {2: 40.0, 4: 30.0})

    def __post_init__(self):
        if not self.gap_timeout > 0:
            raise ValueError("gap_timeout must be > 0")

    @classmethod
    def from_config(cls, cfg: BaselineConfig, min_green: dict[int, float] | None = None) -> SystemDConfig:
        out = cls(cfg.gap_timeout, dict(cfg.max_green))
        for stage, mg in (min_green or {}).items():
            if stage in out.max_green and out.max_green[stage] < mg:
                raise ValueError(f"max_green for stage {stage} is below its min_green")
        return out


def system_d_decide(time_since_occupied: float, elapsed_green: float, stage: int, cfg: SystemDConfig) -> str:
    """Extend while the served loops saw a vehicle recently and max green is not reached."""
    if time_since_occupied < cfg.gap_timeout and elapsed_green < cfg.max_green[stage]:
        return EXTEND
    return SWITCH


class MaxOccupancyPolicy:
    name = "max-occupancy"

    def __call__(self, env) -> int:
        queues = {s: env.stage_queue(s) for s in env.actions}
        return env.action_index(max_occupancy_decide(queues, env.current_stage))


class SystemDPolicy:
    name = "system-d"

    def __init__(self, cfg: SystemDConfig):
        self.cfg = cfg

    def __call__(self, env) -> int:
        stage = env.current_stage
        decision = system_d_decide(env.time_since_occupied(stage), env.elapsed_green, stage, self.cfg)
        if decision == EXTEND:
            return env.action_index(stage)
        others = [s for s in env.actions if s != stage]
        return env.action_index(others[0])

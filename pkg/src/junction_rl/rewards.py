"""The twelve reward functions and the arrival-rate estimate they use."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .sensing import ActionWindowStats


class RewardKind(enum.Enum):
    QUEUE = "queue"
    QUEUE_SQUARED = "queue-squared"
    DELTA_QUEUE = "delta-queue"
    WAIT_TIME = "wait-time"
    DELTA_WAIT_TIME = "delta-wait-time"
    WAIT_TIME_OVER_DEMAND = "wait-time-over-demand"
    TIME_LOST = "time-lost"
    DELTA_TIME_LOST = "delta-time-lost"
    TIME_LOST_OVER_DEMAND = "time-lost-over-demand"
    AVG_SPEED = "avg-speed"
    AVG_SPEED_TIMES_DEMAND = "avg-speed-times-demand"
    THROUGHPUT = "throughput"

    @classmethod
    def parse(cls, name: str | RewardKind) -> RewardKind:
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown reward kind {name!r}; choose from {[k.value for k in cls]}")

    @property
    def uses_demand(self) -> bool:
        return self in _DEMAND_KINDS


_DEMAND_KINDS = frozenset(
    {RewardKind.WAIT_TIME_OVER_DEMAND, RewardKind.TIME_LOST_OVER_DEMAND, RewardKind.AVG_SPEED_TIMES_DEMAND}
)


class DemandPreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class DemandEstimate:
    d_hat: float  # veh/s
    estimation_window: float  # s


def estimate_demand(
    arrivals_per_step: Sequence[int],
    step: int,
    dt: float,
    window: float = 300.0,
    d_floor: float = 0.01,
) -> DemandEstimate:
    """Arrival rate over the trailing window ending at ``step``.

    ``arrivals_per_step[k]`` counts arrivals in ``((k-1)dt, k dt]``. Early in
    an episode the divisor is the elapsed time rather than the full window.
    """
    if window <= 0:
        raise ValueError("window must be > 0")
    n_win = max(1, round(window / dt))
    lo = max(1, step - n_win + 1)
    span = (step - lo + 1) * dt if step >= 1 else 0.0
    count = sum(arrivals_per_step[lo : step + 1]) if step >= 1 else 0
    rate = count / span if span > 0 else 0.0
    return DemandEstimate(max(rate, d_floor), window)


def compute_reward(kind: RewardKind, w: ActionWindowStats, d: DemandEstimate | None = None) -> float:
    if kind.uses_demand and (d is None or not d.d_hat > 0):
        raise DemandPreconditionError(f"{kind.value} needs a positive demand estimate")
    if kind is RewardKind.QUEUE:
        return -float(w.sum_queue_now)
    if kind is RewardKind.QUEUE_SQUARED:
        return -float(w.sum_queue_now) ** 2
    if kind is RewardKind.DELTA_QUEUE:
        return float(w.sum_queue_prev - w.sum_queue_now)
    if kind is RewardKind.WAIT_TIME:
        return -w.wait_accrued_this_window
    if kind is RewardKind.DELTA_WAIT_TIME:
        return w.cum_wait_at_tp - w.cum_wait_at_t
    if kind is RewardKind.WAIT_TIME_OVER_DEMAND:
        return -w.wait_accrued_this_window / d.d_hat
    if kind is RewardKind.TIME_LOST:
        return -w.time_lost_this_window
    if kind is RewardKind.DELTA_TIME_LOST:
        return w.time_lost_prev_window - w.time_lost_this_window
    if kind is RewardKind.TIME_LOST_OVER_DEMAND:
        return -w.time_lost_this_window / d.d_hat
    if kind is RewardKind.AVG_SPEED:
        return w.avg_speed_ratio_at_t
    if kind is RewardKind.AVG_SPEED_TIMES_DEMAND:
        return d.d_hat * w.avg_speed_ratio_at_t
    if kind is RewardKind.THROUGHPUT:
        return float(w.throughput_this_window)
    raise ValueError(kind)


def all_rewards(w: ActionWindowStats, d: DemandEstimate) -> dict[RewardKind, float]:
    return {kind: compute_reward(kind, w, d) for kind in RewardKind}

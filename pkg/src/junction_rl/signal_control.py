"""Emulated stage controller.

The controller is a pure state machine. Every duration is quantised to
whole simulation ticks (rounded up), so a 7 s minimum green at a 0.6 s
step lasts 12 ticks (7.2 s) and a 5 s intergreen lasts 9 ticks (5.4 s).
Nothing ever runs shorter than configured.

Indications use one character per movement: ``G`` green, ``A`` amber,
``R`` red. During an intergreen the movements that were green show amber
for the amber period and red afterwards; everything else is red.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .config import ConfigError, JunctionConfig, StageConfig

IN_STAGE = "in_stage"
IN_INTERGREEN = "in_intergreen"

GREEN, AMBER, RED = "G", "A", "R"


class RequestRejected(RuntimeError):
    """A stage was requested while it was not a legal action."""


def ticks(duration: float, dt: float) -> int:
    return max(0, math.ceil(duration / dt - 1e-9))


def movement_keys(junction: JunctionConfig) -> tuple[str, ...]:
    return tuple(
        f"{arm.name}.{m}"
        for arm in junction.arms
        for m in ("left", "through", "right")
    )


def default_conflicts(junction: JunctionConfig) -> frozenset[frozenset[str]]:
    """Movements from different road axes conflict.

    Arms are paired into axes in declaration order (0-1, 2-3, ...).
    Opposed turns on the same axis run together as permitted movements.
    """
    axis = {arm.name: i // 2 for i, arm in enumerate(junction.arms)}
    keys = movement_keys(junction)
    out = set()
    for a in keys:
        for b in keys:
            if a < b and axis[a.split(".")[0]] != axis[b.split(".")[0]]:
                out.add(frozenset((a, b)))
    return frozenset(out)


@dataclass(frozen=True)
class StagePlan:
    served: dict[int, frozenset[str]]
    agent_choosable: tuple[int, ...]
    intermediate_path: dict[tuple[int, int], tuple[int, ...]]
    min_green: dict[int, float]
    intergreen: dict[tuple[int, int], float]
    amber: float
    extension_quantum: float
    dt: float
    movements: tuple[str, ...]
    conflicts: frozenset[frozenset[str]]
    initial_stage: int = 2

    def __post_init__(self):
        for stage, moves in self.served.items():
            unknown = set(moves) - set(self.movements)
            if unknown:
                raise ConfigError(f"stages.served.{stage}", f"unknown movements {sorted(unknown)}")
            for a in moves:
                for b in moves:
                    if a < b and frozenset((a, b)) in self.conflicts:
                        raise ConfigError(f"stages.served.{stage}", f"{a} conflicts with {b}")
        for stage, mg in self.min_green.items():
            if not mg > 0:
                raise ConfigError(f"stages.min_green.{stage}", "must be > 0")
        for pair, ig in self.intergreen.items():
            if not ig > 0:
                raise ConfigError(f"stages.intergreen.{pair}", "must be > 0")
        if not self.extension_quantum > 0:
            raise ConfigError("stages.extension_quantum", "must be > 0")
        if self.amber < 0:
            raise ConfigError("stages.amber", "must be >= 0")
        for stage in self.agent_choosable:
            if stage not in self.served:
                raise ConfigError("stages.agent_choosable", f"unknown stage {stage}")
        for (a, b), path in self.intermediate_path.items():
            for s in (a, b, *path):
                if s not in self.served:
                    raise ConfigError("stages.intermediate_paths", f"unknown stage {s}")
        if self.initial_stage not in self.served:
            raise ConfigError("stages.initial_stage", f"unknown stage {self.initial_stage}")
        # cached per-state indication maps; all stages share the key order
        object.__setattr__(self, "_green_maps", {s: self._green_map(s) for s in self.served})
        object.__setattr__(self, "_transition_maps", {})

    @classmethod
    def from_config(cls, stages: StageConfig, junction: JunctionConfig) -> StagePlan:
        keys = movement_keys(junction)
        ig = stages.intergreen
        if isinstance(ig, dict):
            intergreen = {}
            for a in stages.served:
                for b in stages.served:
                    if a != b:
                        intergreen[(a, b)] = float(ig.get((a, b), 5.0))
        else:
            intergreen = {(a, b): float(ig) for a in stages.served for b in stages.served if a != b}
        min_green = {s: float(stages.min_green.get(s, 7.0)) for s in stages.served}
        return cls(
            served={s: frozenset(m) for s, m in stages.served.items()},
            agent_choosable=tuple(stages.agent_choosable),
            intermediate_path=dict(stages.intermediate_paths),
            min_green=min_green,
            intergreen=intergreen,
            amber=stages.amber,
            extension_quantum=stages.extension_quantum,
            dt=junction.sim_step,
            movements=keys,
            conflicts=default_conflicts(junction),
            initial_stage=stages.initial_stage,
        )

    def min_green_ticks(self, stage: int) -> int:
        return ticks(self.min_green[stage], self.dt)

    def intergreen_ticks(self, a: int, b: int) -> int:
        return max(1, ticks(self.intergreen[(a, b)], self.dt))

    @property
    def amber_ticks(self) -> int:
        return ticks(self.amber, self.dt)

    @property
    def extension_ticks(self) -> int:
        return max(1, ticks(self.extension_quantum, self.dt))

    def path(self, current: int, target: int) -> tuple[int, ...]:
        return tuple(self.intermediate_path.get((current, target), ())) + (target,)

    def _green_map(self, stage: int) -> dict[str, str]:
        served = self.served[stage]
        return {m: GREEN if m in served else RED for m in self.movements}

    def transition_map(self, from_stage: int, amber: bool) -> dict[str, str]:
        key = (from_stage, amber)
        cached = self._transition_maps.get(key)
        if cached is None:
            served = self.served[from_stage]
            lit = AMBER if amber else RED
            cached = {m: lit if m in served else RED for m in self.movements}
            self._transition_maps[key] = cached
        return cached


@dataclass(frozen=True, slots=True)
class ControllerState:
    mode: str
    current_stage: int
    elapsed_ticks: int = 0
    pending_path: tuple[int, ...] = ()
    intergreen_ticks_left: int = 0
    intergreen_ticks_total: int = 0
    hold_ticks_left: int = 0
    dt: float = 0.6

    @property
    def elapsed_in_stage(self) -> float:
        return self.elapsed_ticks * self.dt

    @property
    def intergreen_remaining(self) -> float:
        return self.intergreen_ticks_left * self.dt

    @property
    def active_stage(self) -> int | None:
        """Stage currently showing green, or ``None`` during an intergreen."""
        return self.current_stage if self.mode == IN_STAGE else None


def initial_state(plan: StagePlan, stage: int | None = None) -> ControllerState:
    return ControllerState(IN_STAGE, plan.initial_stage if stage is None else stage, dt=plan.dt)


def legal_actions(state: ControllerState, plan: StagePlan) -> frozenset[int]:
    if (
        state.mode == IN_STAGE
        and not state.pending_path
        and state.hold_ticks_left == 0
        and state.elapsed_ticks >= plan.min_green_ticks(state.current_stage)
    ):
        return frozenset(plan.agent_choosable)
    return frozenset()


def request_stage(state: ControllerState, target: int, plan: StagePlan) -> ControllerState:
    if target not in legal_actions(state, plan):
        raise RequestRejected(
            f"stage {target} requested in {state.mode} stage {state.current_stage} "
            f"after {state.elapsed_in_stage:.1f}s"
        )
    if target == state.current_stage:
        return replace(state, hold_ticks_left=plan.extension_ticks)
    path = plan.path(state.current_stage, target)
    n = plan.intergreen_ticks(state.current_stage, path[0])
    return replace(
        state,
        mode=IN_INTERGREEN,
        pending_path=path,
        intergreen_ticks_left=n,
        intergreen_ticks_total=n,
        hold_ticks_left=0,
    )


def indications(state: ControllerState, plan: StagePlan) -> dict[str, str]:
    if state.mode == IN_STAGE:
        return plan._green_maps[state.current_stage]
    elapsed = state.intergreen_ticks_total - state.intergreen_ticks_left
    return plan.transition_map(state.current_stage, elapsed < plan.amber_ticks)


def tick(state: ControllerState, plan: StagePlan) -> tuple[ControllerState, dict[str, str]]:
    """Advance one simulation step and return the indications now showing."""
    if state.mode == IN_STAGE:
        elapsed = state.elapsed_ticks + 1
        hold = max(0, state.hold_ticks_left - 1)
        if state.pending_path and elapsed >= plan.min_green_ticks(state.current_stage):
            # intermediate stage has run its fixed duration
            nxt = state.pending_path[0]
            n = plan.intergreen_ticks(state.current_stage, nxt)
            state = replace(
                state,
                mode=IN_INTERGREEN,
                elapsed_ticks=elapsed,
                hold_ticks_left=0,
                intergreen_ticks_left=n,
                intergreen_ticks_total=n,
            )
        else:
            # direct construction: this is the per-step hot path
            state = ControllerState(
                IN_STAGE, state.current_stage, elapsed, state.pending_path,
                state.intergreen_ticks_left, state.intergreen_ticks_total, hold, state.dt,
            )
    else:
        left = state.intergreen_ticks_left - 1
        if left <= 0:
            state = ControllerState(
                IN_STAGE,
                state.pending_path[0],
                elapsed_ticks=0,
                pending_path=state.pending_path[1:],
                dt=state.dt,
            )
        else:
            state = ControllerState(
                IN_INTERGREEN, state.current_stage, state.elapsed_ticks, state.pending_path,
                left, state.intergreen_ticks_total, state.hold_ticks_left, state.dt,
            )
    return state, indications(state, plan)

"""Decision-point environment around the simulator and controller.

The environment advances the simulation one step at a time and stops
whenever the controller can accept a request (a decision point) or the
episode ends. Each returned reward covers the window between two
consecutive decision points.

State vector layout, oldest slice first: for each of ``history_slots``
slices, ``[occupancy per arm..., one-hot of active stage...]``. The stage
block is all zero while no stage is showing green.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import sensing, signal_control as sc
from .config import EPISODE_SECONDS, ExperimentConfig
from .rewards import RewardKind, all_rewards, compute_reward, estimate_demand
from .sim_core import Network, build_network


@dataclass
class WindowRecord:
    step: int
    t_p: float
    t: float
    action: int | None
    stats: sensing.ActionWindowStats
    d_hat: float
    rewards: dict


def encode_state(occupancy_history, stage_history, stage_order) -> np.ndarray:
    """Flatten per-slice occupancies and stage one-hots, oldest first.

    ``stage_history`` entries are a stage id or ``None`` (no stage active).
    """
    n_stage = len(stage_order)
    index = {s: i for i, s in enumerate(stage_order)}
    rows = []
    for occ, stage in zip(occupancy_history, stage_history):
        hot = [0.0] * n_stage
        if stage is not None:
            hot[index[stage]] = 1.0
        rows.append(list(occ) + hot)
    return np.asarray(rows, dtype=np.float64).ravel()


class JunctionEnv:
    """One junction episode at a time; reuse via :meth:`reset`."""

    def __init__(
        self,
        cfg: ExperimentConfig | None = None,
        reward: RewardKind | str = RewardKind.AVG_SPEED,
        record: bool = False,
        episode_seconds: float = EPISODE_SECONDS,
    ):
        self.cfg = cfg or ExperimentConfig()
        self.reward_kind = RewardKind.parse(reward)
        self.record = record
        j = self.cfg.junction
        self.plan = sc.StagePlan.from_config(self.cfg.stages, j)
        self.stage_order = tuple(sorted(self.plan.served))
        self._stage_col = {st: i for i, st in enumerate(self.stage_order)}
        self.actions = tuple(self.plan.agent_choosable)
        self.n_steps = int(round(episode_seconds / j.sim_step))
        self.slots = self.cfg.sensing.history_slots
        self.state_dim = self.slots * (len(j.arms) + len(self.stage_order))
        self.n_actions = len(self.actions)
        self._stage_arms = {
            s: tuple(sorted({j.arm_index(m.split(".")[0]) for m in moves}))
            for s, moves in self.plan.served.items()
        }
        arms = j.arms
        lane_moves = [(ai, moves) for ai, arm in enumerate(arms) for moves in arm.lanes]
        self._served_lanes = {
            s: [
                i for i, (ai, moves) in enumerate(lane_moves)
                if any(f"{arms[ai].name}.{m}" in served for m in moves)
            ]
            for s, served in self.plan.served.items()
        }
        self.net: Network | None = None

    # -- episode control ---------------------------------------------------

    def reset(self, demand: str | float, seed: int) -> np.ndarray:
        cfg = self.cfg
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self.demand = demand
        self.net = build_network(cfg.junction, cfg.sensing.zone_length, cfg.sensing.v_stop)
        self.net.set_demand(cfg.demand(demand), self.rng)
        if self.record:
            self.net.start_trace()
        self.ctrl = sc.initial_state(self.plan)
        self.signals = sc.indications(self.ctrl, self.plan)
        n_arms = len(cfg.junction.arms)
        self.occ_hist = deque([(0.0,) * n_arms] * self.slots, maxlen=self.slots)
        self.stage_hist = deque([self.ctrl.active_stage] * self.slots, maxlen=self.slots)
        # same layout as encode_state, maintained incrementally
        self._hist = encode_state(self.occ_hist, self.stage_hist, self.stage_order).reshape(self.slots, -1)
        self.readings = [sensing.DetectorReading(0.0, 0, cfg.junction.v_max, 0, 0)] * n_arms
        self.loop_last = [-math.inf] * len(self.net.lanes)
        self.windows: list[WindowRecord] = []
        self.decision_steps: list[int] = []
        self.done = False
        self.tracker = sensing.WindowTracker(self.net, cfg.sensing)
        self._advance_to_decision()
        self.tracker.open()
        if not self.done:
            self.decision_steps.append(self.net.step_index)
        return self.state()

    def state(self) -> np.ndarray:
        return self._hist.ravel().copy()

    def legal(self) -> frozenset[int]:
        return sc.legal_actions(self.ctrl, self.plan)

    def step(self, action: int):
        """Apply action index ``action`` and run to the next decision point.

        Returns ``(state, reward, done, record)``.
        """
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        stage = self.actions[action]
        self.ctrl = sc.request_stage(self.ctrl, stage, self.plan)
        self.signals = sc.indications(self.ctrl, self.plan)
        self._advance_one()
        self._advance_to_decision()
        stats = self.tracker.close()
        d = estimate_demand(
            self.net.arrivals_per_step,
            self.net.step_index,
            self.cfg.junction.sim_step,
            self.cfg.rewards.estimation_window,
            self.cfg.rewards.d_floor,
        )
        reward = compute_reward(self.reward_kind, stats, d)
        rec = WindowRecord(
            self.net.step_index, stats.t_p, stats.t, action, stats, d.d_hat,
            all_rewards(stats, d) if self.record else {self.reward_kind: reward},
        )
        self.windows.append(rec)
        if not self.done:
            self.decision_steps.append(self.net.step_index)
        return self.state(), reward, self.done, rec

    # -- simulation plumbing ----------------------------------------------

    def _advance_one(self) -> None:
        net = self.net
        events = net.advance(self.signals, self.rng)
        self.ctrl, self.signals = sc.tick(self.ctrl, self.plan)
        self._sense(events)
        if net.step_index >= self.n_steps:
            self.done = True

    def _advance_to_decision(self) -> None:
        while not self.done and not self.legal():
            self._advance_one()

    def _sense(self, events) -> None:
        net = self.net
        s = self.cfg.sensing
        v_max = self.cfg.junction.v_max
        flows = [0] * len(net.zones)
        for e in events:
            flows[e.arm] += 1
        readings = []
        for zone, lanes in zip(net.zones, net.arm_lanes):
            stop_line = lanes[0].stop_line
            readings.append(sensing.read_zone(zone, lanes, stop_line, s.v_queue, v_max, flows[zone.arm]))
        self.readings = readings
        t = net.time
        for i, lane in enumerate(net.lanes):
            if sensing.loop_occupied(lane, lane.stop_line, s.loop_length):
                self.loop_last[i] = t
        occ = tuple(r.occupancy for r in readings)
        stage = self.ctrl.active_stage
        self.occ_hist.append(occ)
        self.stage_hist.append(stage)
        h = self._hist
        h[:-1] = h[1:]
        h[-1] = 0.0
        h[-1, : len(occ)] = occ
        if stage is not None:
            h[-1, len(occ) + self._stage_col[stage]] = 1.0
        if net.trace is not None:
            net.trace.readings.append(readings)

    # -- observations used by the reference controllers -------------------

    @property
    def current_stage(self) -> int:
        return self.ctrl.current_stage

    @property
    def elapsed_green(self) -> float:
        return self.ctrl.elapsed_in_stage

    def stage_queue(self, stage: int) -> int:
        """Total queue count over the detector zones of arms the stage serves."""
        return sum(self.readings[a].queue_count for a in self._stage_arms[stage])

    def served_lanes(self, stage: int) -> list[int]:
        return self._served_lanes[stage]

    def time_since_occupied(self, stage: int) -> float:
        lanes = self.served_lanes(stage)
        if not lanes:
            return math.inf
        return self.net.time - max(self.loop_last[i] for i in lanes)

    def action_index(self, stage: int) -> int:
        return self.actions.index(stage)

    def average_wait(self) -> float:
        from .harness import average_wait

        return average_wait(self.net)

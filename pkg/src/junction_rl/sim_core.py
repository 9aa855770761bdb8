"""Discrete-time microscopic simulation of a signalised junction.

Vehicles follow the Krauss safe-speed model on single-file approach lanes
(no lane changing). Positions are front-bumper distances from the approach
entry; the stop line of every lane sits at ``position == arm.length``.
A vehicle that passes the stop line is "in the box": it holds the speed it
crossed at (still capped by the safe speed behind its lane leader), sees
no signal, and is removed once it has spent ``box_clearance`` seconds past
the line.

One call to :meth:`Network.advance` runs a full step in a fixed order:

1. lane vehicles move under the current indications (leader first),
2. Poisson arrivals due in the step join their arm backlog and the
   backlog is inserted FIFO where the entry is free,
3. every vehicle accrues one step of stopped time and time lost from its
   end-of-step state: backlogged vehicles count as stopped, approach
   vehicles are stopped below ``v_stop``, box vehicles accrue nothing.

Backlogged vehicles all accrue exactly ``dt`` per step from zero, so their
totals are written lazily (on insertion, or by :meth:`Network.settle_backlog`
before anything reads them) with the same floating-point sums.
"""
from __future__ import annotations

import bisect
import csv
import math
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .config import MOVEMENTS, ConfigError, DemandProfile, JunctionConfig
from . import sensing


class InvariantViolation(RuntimeError):
    """Internal inconsistency in the dynamics, always a bug."""


@dataclass(slots=True)
class Vehicle:
    id: int
    arm: int
    lane: int  # -1 while waiting in the insertion backlog
    movement: str
    movement_key: str
    entry_time: float
    position: float = 0.0
    speed: float = 0.0
    length: float = 4.5
    cumulative_stop_time: float = 0.0
    cumulative_time_lost: float = 0.0
    crossed_at: float | None = None
    queued_step: int = 0  # step at which the vehicle joined the backlog

    @property
    def crossed(self) -> bool:
        return self.crossed_at is not None


@dataclass
class Lane:
    arm: int
    index: int
    movements: tuple[str, ...]
    stop_line: float
    vehicles: list[Vehicle] = field(default_factory=list)  # front first


@dataclass(frozen=True)
class CrossingEvent:
    time: float
    step: int
    vehicle_id: int
    arm: int
    lane: int
    movement: str
    indication: str


@dataclass
class EpisodeTrace:
    """Per-step record of an episode.

    ``rows`` holds one tuple per vehicle per step:
    ``(step, id, arm, lane, position, speed, stopped, cum_stop, cum_lost)``.
    Backlogged vehicles appear with ``lane == -1`` and position 0. The
    ``stopped`` flag is set exactly when the vehicle accrued stopped time
    in that step.
    """

    dt: float
    v_max: float
    v_stop: float
    rows: list[tuple] = field(default_factory=list)
    signals: list[dict[str, str]] = field(default_factory=list)
    readings: list[list] = field(default_factory=list)
    events: list[CrossingEvent] = field(default_factory=list)
    counts: list[tuple[int, int, int, int]] = field(default_factory=list)
    step_offsets: list[int] = field(default_factory=list)

    CSV_COLUMNS = ("step", "vehicle_id", "arm", "lane", "position", "speed", "stopped")

    @property
    def n_steps(self) -> int:
        return len(self.step_offsets)

    def step_rows(self, step: int) -> list[tuple]:
        """Rows recorded after step ``step`` (1-based)."""
        lo = self.step_offsets[step - 1]
        hi = self.step_offsets[step] if step < len(self.step_offsets) else len(self.rows)
        return self.rows[lo:hi]

    def write_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            w.writerow((r[0], r[1], r[2], r[3], repr(r[4]), repr(r[5]), int(r[6])))


def krauss_safe_speed(
    gap: float, leader_speed: float, follower_speed: float, params: JunctionConfig
) -> float:
    """Largest speed from which the follower can still stop behind its leader.

    Reaction time is one simulation step. ``follower_speed`` is accepted for
    interface symmetry; the safe speed does not depend on it.
    """
    return _vsafe(gap, leader_speed, params.decel, params.sim_step)


def _vsafe(gap: float, vl: float, b: float, tr: float) -> float:
    if gap <= 0.0 and vl <= 0.0:
        return 0.0
    bt = b * tr
    return -bt + math.sqrt(bt * bt + vl * vl + 2.0 * b * max(gap, 0.0))


class ArrivalProcess:
    """Poisson arrivals with categorical arm and movement draws.

    Draw order per arrival is fixed (headway, arm, movement) so a seed
    fully determines the arrival sequence.
    """

    def __init__(self, profile: DemandProfile, config: JunctionConfig, rng: np.random.Generator):
        profile.validate(len(config.arms))
        self.profile = profile
        self.rng = rng
        self.mean_headway = profile.mean_headway
        self._arm_cum = list(np.cumsum(profile.arm_split))
        self._turn_cum = []
        for arm in config.arms:
            ratios = [arm.turning.get(m, 0.0) for m in MOVEMENTS]
            self._turn_cum.append(list(np.cumsum(ratios)))
        self.next_time = self._draw_headway(0.0)

    def _draw_headway(self, t: float) -> float:
        if math.isinf(self.mean_headway):
            return math.inf
        return t + float(self.rng.exponential(self.mean_headway))

    @staticmethod
    def _pick(cum: list[float], u: float) -> int:
        i = bisect.bisect_right(cum, u * cum[-1])
        while i >= len(cum) or (i > 0 and cum[i] == cum[i - 1]):
            i -= 1  # never land on a zero-probability category
        return i

    def draw(self, t1: float) -> list[tuple[float, int, str]]:
        """All arrivals with time <= ``t1`` not yet drawn."""
        out = []
        while self.next_time <= t1:
            arm = self._pick(self._arm_cum, self.rng.random())
            mv = MOVEMENTS[self._pick(self._turn_cum[arm], self.rng.random())]
            out.append((self.next_time, arm, mv))
            self.next_time = self._draw_headway(self.next_time)
        return out


class Network:
    """Mutable simulation state for one episode."""

    def __init__(self, config: JunctionConfig, zone_length: float = 50.0, v_stop: float = 0.1):
        self.config = config
        self.zone_length = zone_length
        self.v_stop = v_stop
        self.lanes: list[Lane] = []
        self.arm_lanes: list[list[Lane]] = []
        for ai, arm in enumerate(config.arms):
            group = []
            for li, moves in enumerate(arm.lanes):
                lane = Lane(ai, li, tuple(moves), arm.length)
                self.lanes.append(lane)
                group.append(lane)
            self.arm_lanes.append(group)
        self.backlog: list[deque[Vehicle]] = [deque() for _ in config.arms]
        self.zones = [
            sensing.DetectorZone(ai, tuple(range(len(g))), min(zone_length, config.arms[ai].length))
            for ai, g in enumerate(self.arm_lanes)
        ]
        self.step_index = 0
        self.time = 0.0
        self.n_arrived = 0
        self.n_injected = 0
        self.n_exited = 0
        self.vehicles: list[Vehicle] = []  # every vehicle ever created
        self.arrivals_per_step: list[int] = [0]
        self.events: list[CrossingEvent] = []
        self.arrivals: ArrivalProcess | None = None
        self.trace: EpisodeTrace | None = None
        self._next_id = 0
        self._accrual = [0.0]  # _accrual[n]: dt added n times from zero

    @property
    def stop_lines(self) -> list[tuple[int, int, float]]:
        return [(lane.arm, lane.index, lane.stop_line) for lane in self.lanes]

    @property
    def on_network(self) -> int:
        return sum(len(lane.vehicles) for lane in self.lanes)

    @property
    def backlogged(self) -> int:
        return sum(len(q) for q in self.backlog)

    def backlog_accrual(self, n: int) -> float:
        """Stopped time (equal to time lost) of ``n`` steps spent in the backlog."""
        acc = self._accrual
        dt = self.config.sim_step
        while len(acc) <= n:
            acc.append(acc[-1] + dt)
        return acc[max(n, 0)]

    def settle_backlog(self) -> None:
        """Write up-to-date accrued times into every backlogged vehicle."""
        k = self.step_index
        for q in self.backlog:
            for v in q:
                v.cumulative_stop_time = v.cumulative_time_lost = self.backlog_accrual(k - v.queued_step + 1)

    def start_trace(self) -> EpisodeTrace:
        self.trace = EpisodeTrace(self.config.sim_step, self.config.v_max, self.v_stop)
        return self.trace

    def set_demand(self, profile: DemandProfile, rng: np.random.Generator) -> None:
        self.arrivals = ArrivalProcess(profile, self.config, rng)

    def advance(self, signals: dict[str, str], rng: np.random.Generator) -> list[CrossingEvent]:
        """Run one simulation step under ``signals``; returns new crossings."""
        cfg = self.config
        dt = cfg.sim_step
        self.step_index += 1
        self.time = self.step_index * dt
        events = step(self, signals, rng, dt)
        if self.arrivals is not None:
            spawn_arrivals(self, self.arrivals, dt)
        else:
            self.arrivals_per_step.append(0)
        # backlogged vehicles accrue lazily, see settle_backlog
        sensing.accumulate_per_vehicle(
            [v for lane in self.lanes for v in lane.vehicles if v.crossed_at is None],
            dt, cfg.v_max, self.v_stop,
        )
        if self.trace is not None:
            self._record(signals, events)
        return events

    def _record(self, signals: dict[str, str], events: list[CrossingEvent]) -> None:
        tr = self.trace
        k = self.step_index
        v_stop = self.v_stop
        tr.step_offsets.append(len(tr.rows))
        self.settle_backlog()
        for lane in self.lanes:
            for v in lane.vehicles:
                stopped = v.crossed_at is None and v.speed < v_stop
                tr.rows.append((k, v.id, v.arm, v.lane, v.position, v.speed, stopped,
                                v.cumulative_stop_time, v.cumulative_time_lost))
        for q in self.backlog:
            for v in q:
                tr.rows.append((k, v.id, v.arm, -1, 0.0, 0.0, True,
                                v.cumulative_stop_time, v.cumulative_time_lost))
        tr.signals.append(signals)
        tr.events.extend(events)
        tr.counts.append((self.n_arrived, self.n_injected, self.on_network, self.n_exited))


def build_network(config: JunctionConfig, zone_length: float = 50.0, v_stop: float = 0.1) -> Network:
    config.validate()
    if zone_length <= 0:
        raise ConfigError("sensing.zone_length", "must be > 0")
    return Network(config, zone_length, v_stop)


def _choose_lane(net: Network, v: Vehicle) -> Lane | None:
    best, best_space = None, -math.inf
    for lane in net.arm_lanes[v.arm]:
        if v.movement not in lane.movements:
            continue
        if lane.vehicles:
            last = lane.vehicles[-1]
            space = last.position - last.length
        else:
            space = math.inf
        if space > best_space:
            best, best_space = lane, space
    if best is None or best_space < net.config.min_gap:
        return None
    return best


def _insert(net: Network, v: Vehicle, lane: Lane) -> None:
    cfg = net.config
    speed = cfg.v_max
    if lane.vehicles:
        last = lane.vehicles[-1]
        gap = last.position - last.length - cfg.min_gap
        speed = min(speed, _vsafe(gap, last.speed, cfg.decel, cfg.sim_step))
    if v.lane < 0:
        # leaves the backlog before this step's accrual
        v.cumulative_stop_time = v.cumulative_time_lost = net.backlog_accrual(net.step_index - v.queued_step)
    v.lane = lane.index
    v.position = 0.0
    v.speed = speed
    lane.vehicles.append(v)
    net.n_injected += 1


def spawn_arrivals(net: Network, process: ArrivalProcess, dt: float) -> list[Vehicle]:
    """Create vehicles for arrivals due by ``net.time`` and insert what fits.

    Returns the vehicles created in this call (inserted or backlogged).
    """
    cfg = net.config
    new = []
    for t, arm, mv in process.draw(net.time):
        v = Vehicle(
            id=net._next_id, arm=arm, lane=-1, movement=mv,
            movement_key=f"{cfg.arms[arm].name}.{mv}", entry_time=t,
            length=cfg.vehicle_length, queued_step=net.step_index,
        )
        net._next_id += 1
        net.n_arrived += 1
        net.vehicles.append(v)
        net.backlog[arm].append(v)
        new.append(v)
    net.arrivals_per_step.append(len(new))
    for q in net.backlog:
        while q:
            lane = _choose_lane(net, q[0])
            if lane is None:
                break
            _insert(net, q.popleft(), lane)
    return new


def step(net: Network, signals: dict[str, str], rng: np.random.Generator, dt: float) -> list[CrossingEvent]:
    """Move every lane vehicle one step; returns stop-line crossings.

    Each lane is updated front to back. The Krauss bound uses the leader's
    speed and gap at the start of the step; positions are additionally
    clamped so no vehicle ends behind-overlapping its already-moved leader,
    and a red stop line is never passed.
    """
    cfg = net.config
    if abs(dt - cfg.sim_step) > 1e-12:
        raise ValueError(f"dt={dt} differs from sim_step={cfg.sim_step}")
    vmax, a, b, min_gap = cfg.v_max, cfg.accel, cfg.decel, cfg.min_gap
    sigma = cfg.driver_imperfection
    # _vsafe inlined for the leader gap: this loop dominates simulation time
    bt = b * dt
    bt2, two_b = bt * bt, 2.0 * b
    sqrt = math.sqrt
    t_new = net.step_index * dt
    events = []
    for lane in net.lanes:
        vs = lane.vehicles
        if not vs:
            continue
        L = lane.stop_line
        lead_x = lead_v = lead_len = None
        lead_rear_new = math.inf
        for v in vs:
            x, s = v.position, v.speed
            vn = s + a * dt
            if vn > vmax:
                vn = vmax
            if lead_x is not None:
                gap = lead_x - lead_len - x - min_gap
                if gap <= 0.0:
                    safe = -bt + sqrt(bt2 + lead_v * lead_v) if lead_v > 0.0 else 0.0
                else:
                    safe = -bt + sqrt(bt2 + lead_v * lead_v + two_b * gap)
                if safe < vn:
                    vn = safe
            crossed = v.crossed_at is not None
            if crossed and s < vn:
                vn = s  # box traversal holds the crossing speed
            red = False
            ind = None
            if not crossed:
                ind = signals[v.movement_key]
                if ind != "G":
                    d = L - x
                    stop = -bt + sqrt(bt2 + two_b * d) if d > 0.0 else 0.0
                    if ind == "R":
                        red = True
                        if stop < vn:
                            vn = stop
                        if d / dt < vn:
                            vn = d / dt
                    elif stop >= s - b * dt - 1e-9:
                        # amber: stop when it is comfortable, else proceed
                        if stop < vn:
                            vn = stop
            if sigma > 0.0:
                vn -= sigma * a * dt * rng.random()
            if vn < 0.0:
                vn = 0.0
            xn = x + vn * dt
            clamped = False
            if xn > lead_rear_new:
                xn, clamped = lead_rear_new, True
            if red and xn > L:
                xn, clamped = L, True
            if clamped:
                if xn < x - 1e-9:
                    raise InvariantViolation(
                        f"vehicle {v.id} pushed back from {x} to {xn} (negative gap)"
                    )
                xn = max(xn, x)
                vn = (xn - x) / dt
            lead_x, lead_v, lead_len = x, s, v.length
            v.position = xn
            v.speed = vn if vn <= vmax else vmax
            lead_rear_new = xn - v.length
            if not crossed and xn > L:
                v.crossed_at = t_new
                ev = CrossingEvent(t_new, net.step_index, v.id, v.arm, v.lane, v.movement, ind)
                events.append(ev)
        clearance = cfg.box_clearance - 1e-9
        while vs and vs[0].crossed_at is not None and t_new - vs[0].crossed_at >= clearance:
            vs.pop(0)
            net.n_exited += 1
    net.events.extend(events)
    return events


def run_fixed(net: Network, signal_seq: Iterable[dict[str, str]], rng: np.random.Generator) -> None:
    """Advance ``net`` once per indication map in ``signal_seq``."""
    for sig in signal_seq:
        net.advance(sig, rng)

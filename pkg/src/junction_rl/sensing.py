"""Emulated detector outputs and per-vehicle accounting.

Only what the sensors see leaves this module: per-arm occupancy, queue
count, mean speed and flow over a zone upstream of the stop line, stop-line
presence loops, and per-vehicle stopped time and time lost.

``V_t`` (the vehicles "at the junction") is the set of vehicles on an
incoming lane whose front lies inside its arm's detector zone and that have
not yet crossed the stop line.

Reward windows are half-open intervals ``(t_p, t]`` on step boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .config import JunctionConfig, SensingConfig


class AlignmentError(ValueError):
    """Window bounds are not on simulation step boundaries or are unordered."""


@dataclass(frozen=True)
class DetectorZone:
    arm: int
    lanes: tuple[int, ...]
    zone_length: float = 50.0

    @property
    def lane_count(self) -> int:
        return len(self.lanes)


@dataclass(frozen=True)
class DetectorReading:
    occupancy: float
    queue_count: int
    mean_speed: float
    flow_count_in_window: int
    vehicle_count: int


@dataclass(frozen=True)
class ActionWindowStats:
    t_pp: float
    t_p: float
    t: float
    sum_queue_prev: int
    sum_queue_now: int
    wait_accrued_prev_window: float
    wait_accrued_this_window: float
    cum_wait_at_tp: float
    cum_wait_at_t: float
    time_lost_prev_window: float
    time_lost_this_window: float
    avg_speed_ratio_at_t: float
    throughput_this_window: int
    vehicle_count_at_t: int


def _overlap(front: float, length: float, lo: float, hi: float) -> float:
    return max(0.0, min(front, hi) - max(front - length, lo))


def read_occupancy(zone: DetectorZone, vehicles: Iterable, stop_line: float) -> float:
    """Fraction of the zone (all covered lanes) covered by vehicle bodies."""
    lo = stop_line - zone.zone_length
    covered = sum(_overlap(v.position, v.length, lo, stop_line) for v in vehicles)
    return min(1.0, covered / (zone.zone_length * zone.lane_count))


def in_zone(position: float, stop_line: float, zone_length: float) -> bool:
    return stop_line - zone_length <= position <= stop_line


def estimate_queue(zone: DetectorZone, vehicles: Iterable, stop_line: float, v_queue: float = 0.5) -> int:
    return sum(
        1
        for v in vehicles
        if in_zone(v.position, stop_line, zone.zone_length) and v.speed < v_queue
    )


def read_zone(
    zone: DetectorZone,
    lanes: Sequence,
    stop_line: float,
    v_queue: float,
    v_max: float,
    flow: int = 0,
) -> DetectorReading:
    """One pass over an arm's lanes producing a full reading."""
    lo = stop_line - zone.zone_length
    covered = 0.0
    queue = n = 0
    speed_sum = 0.0
    for lane in lanes:
        for v in lane.vehicles:  # front first
            x = v.position
            if x <= lo:
                break
            if x - v.length >= stop_line:
                continue
            covered += min(x, stop_line) - max(x - v.length, lo)
            if x <= stop_line:
                n += 1
                speed_sum += v.speed
                if v.speed < v_queue:
                    queue += 1
    occ = covered / (zone.zone_length * zone.lane_count)
    if occ > 1.0:
        occ = 1.0
    mean_speed = speed_sum / n if n else v_max
    return DetectorReading(occ, queue, mean_speed, flow, n)


def loop_occupied(lane, stop_line: float, loop_length: float) -> bool:
    """Presence loop covering ``[stop_line - loop_length, stop_line]``."""
    lo = stop_line - loop_length
    for v in lane.vehicles:
        if v.position > lo and v.position - v.length < stop_line:
            return True
        if v.position <= lo:
            break  # vehicles are ordered front first
    return False


def accumulate_per_vehicle(vehicles: Iterable, dt: float, v_max: float, v_stop: float = 0.1) -> None:
    """Add one step of stopped time and time lost to each vehicle in place."""
    for v in vehicles:
        s = v.speed
        if s < v_stop:
            v.cumulative_stop_time += dt
        v.cumulative_time_lost += dt * (1.0 - s / v_max)


def count_crossings(events: Iterable, t_p: float, t: float) -> int:
    """Crossing events with timestamp in ``(t_p, t]``."""
    return sum(1 for e in events if t_p < e.time <= t)


def _step_of(t: float, dt: float) -> int:
    k = round(t / dt)
    if abs(k * dt - t) > 1e-6:
        raise AlignmentError(f"time {t} is not a multiple of the step {dt}")
    return k


@dataclass
class _Snapshot:
    t: float
    accum: dict[int, tuple[float, float]]
    sum_queue: int
    cum_wait: float
    wait_window: float
    lost_window: float


class WindowTracker:
    """In-loop construction of :class:`ActionWindowStats` at decision times.

    Call :meth:`open` at the first decision and :meth:`close` at every later
    decision (and at the episode end). ``close`` returns the stats for the
    window that just ended and starts the next one.
    """

    def __init__(self, net, sensing_cfg: SensingConfig):
        self.net = net
        self.zone_length = sensing_cfg.zone_length
        self.v_queue = sensing_cfg.v_queue
        self.prev: _Snapshot | None = None
        self.t_pp = 0.0
        self._events_seen = 0

    def _vt(self):
        zl = self.zone_length
        for lane in self.net.lanes:
            lo = lane.stop_line - zl
            for v in lane.vehicles:  # front first
                if v.position < lo:
                    break
                if v.crossed_at is None:
                    yield v

    def _accum(self) -> dict[int, tuple[float, float]]:
        # backlogged vehicles are left out: their totals follow from queued_step
        out = {}
        for lane in self.net.lanes:
            for v in lane.vehicles:
                if v.crossed_at is None:
                    out[v.id] = (v.cumulative_stop_time, v.cumulative_time_lost)
        return out

    def _base(self, v, accum, k_p: int) -> tuple[float, float]:
        """Accrued totals of ``v`` at the previous decision step ``k_p``."""
        got = accum.get(v.id)
        if got is not None:
            return got
        # not on a lane then: still in the backlog, or not yet arrived
        a = self.net.backlog_accrual(k_p - v.queued_step + 1) if v.queued_step <= k_p else 0.0
        return a, a

    def open(self) -> None:
        vt = list(self._vt())
        self.prev = _Snapshot(
            t=self.net.time,
            accum=self._accum(),
            sum_queue=sum(1 for v in vt if v.speed < self.v_queue),
            cum_wait=sum(v.cumulative_stop_time for v in vt),
            wait_window=self._initial_accrual(vt, 0),
            lost_window=self._initial_accrual(vt, 1),
        )
        self._events_seen = len(self.net.events)

    @staticmethod
    def _initial_accrual(vt, idx: int) -> float:
        # first window is (0, t_first]: everything accrued so far
        if idx == 0:
            return sum(v.cumulative_stop_time for v in vt)
        return sum(v.cumulative_time_lost for v in vt)

    def close(self) -> ActionWindowStats:
        p = self.prev
        vt = list(self._vt())
        k_p = round(p.t / self.net.config.sim_step)
        wait_win = lost_win = 0.0
        queue = 0
        cum_wait = speed_ratio = 0.0
        v_max = self.net.config.v_max
        for v in vt:
            s0, l0 = self._base(v, p.accum, k_p)
            wait_win += v.cumulative_stop_time - s0
            lost_win += v.cumulative_time_lost - l0
            cum_wait += v.cumulative_stop_time
            speed_ratio += v.speed / v_max
            if v.speed < self.v_queue:
                queue += 1
        n = len(vt)
        throughput = len(self.net.events) - self._events_seen
        stats = ActionWindowStats(
            t_pp=self.t_pp,
            t_p=p.t,
            t=self.net.time,
            sum_queue_prev=p.sum_queue,
            sum_queue_now=queue,
            wait_accrued_prev_window=p.wait_window,
            wait_accrued_this_window=wait_win,
            cum_wait_at_tp=p.cum_wait,
            cum_wait_at_t=cum_wait,
            time_lost_prev_window=p.lost_window,
            time_lost_this_window=lost_win,
            avg_speed_ratio_at_t=speed_ratio / n if n else 1.0,
            throughput_this_window=throughput,
            vehicle_count_at_t=n,
        )
        self.t_pp = p.t
        self.prev = _Snapshot(self.net.time, self._accum(), queue, cum_wait, wait_win, lost_win)
        self._events_seen = len(self.net.events)
        return stats


def collect_window_stats(
    trace,
    t_pp: float,
    t_p: float,
    t: float,
    junction: JunctionConfig,
    sensing_cfg: SensingConfig | None = None,
) -> ActionWindowStats:
    """Rebuild window statistics from a recorded :class:`EpisodeTrace`.

    Independent of :class:`WindowTracker`; reads only the per-step rows and
    crossing events. Step 0 is the empty network at ``t = 0``.
    """
    sensing_cfg = sensing_cfg or SensingConfig()
    dt = trace.dt
    if not (t_pp <= t_p <= t):
        raise AlignmentError(f"window bounds out of order: {t_pp}, {t_p}, {t}")
    k_pp, k_p, k = (_step_of(x, dt) for x in (t_pp, t_p, t))
    stop_lines = [arm.length for arm in junction.arms]
    zl = sensing_cfg.zone_length

    def rows_at(step):
        if step == 0:
            return {}
        return {r[1]: r for r in trace.step_rows(step)}

    def vt(rows):
        return [
            r for r in rows.values()
            if r[3] >= 0 and in_zone(r[4], stop_lines[r[2]], zl)
        ]

    r_pp, r_p, r_t = rows_at(k_pp), rows_at(k_p), rows_at(k)
    vt_p, vt_t = vt(r_p), vt(r_t)

    def accrued(members, then, idx):
        return sum(r[idx] - (then[r[1]][idx] if r[1] in then else 0.0) for r in members)

    n = len(vt_t)
    return ActionWindowStats(
        t_pp=t_pp,
        t_p=t_p,
        t=t,
        sum_queue_prev=sum(1 for r in vt_p if r[5] < sensing_cfg.v_queue),
        sum_queue_now=sum(1 for r in vt_t if r[5] < sensing_cfg.v_queue),
        wait_accrued_prev_window=accrued(vt_p, r_pp, 7),
        wait_accrued_this_window=accrued(vt_t, r_p, 7),
        cum_wait_at_tp=sum(r[7] for r in vt_p),
        cum_wait_at_t=sum(r[7] for r in vt_t),
        time_lost_prev_window=accrued(vt_p, r_pp, 8),
        time_lost_this_window=accrued(vt_t, r_p, 8),
        avg_speed_ratio_at_t=(sum(r[5] / trace.v_max for r in vt_t) / n) if n else 1.0,
        throughput_this_window=sum(1 for e in trace.events if k_p < e.step <= k),
        vehicle_count_at_t=n,
    )

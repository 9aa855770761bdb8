"""Brute-force recomputation of window statistics from an exported trace CSV.

Uses only the CSV columns (step, vehicle_id, arm, lane, position, speed,
stopped) plus the geometry constants; shares no code with the package.
"""
import bisect
import csv
import io
from collections import defaultdict


class CsvTrace:
    def __init__(self, text, dt, v_max, stop_line=200.0, zone=50.0, v_queue=0.5):
        self.dt, self.v_max, self.L, self.zone, self.v_queue = dt, v_max, stop_line, zone, v_queue
        self.by_step = defaultdict(dict)
        for r in csv.DictReader(io.StringIO(text)):
            row = (int(r["arm"]), int(r["lane"]), float(r["position"]), float(r["speed"]), r["stopped"] == "1")
            self.by_step[int(r["step"])][int(r["vehicle_id"])] = row
        self.n_steps = max(self.by_step) if self.by_step else 0
        # per-vehicle sorted stopped steps and first appearance, for long episodes
        self.stopped_steps = defaultdict(list)
        self.first_seen = {}
        for k in sorted(self.by_step):
            for vid, r in self.by_step[k].items():
                self.first_seen.setdefault(vid, k)
                if r[4]:
                    self.stopped_steps[vid].append(k)

    def rows(self, step):
        return self.by_step.get(step, {})

    def vt(self, step):
        return {
            vid: r for vid, r in self.rows(step).items()
            if r[1] >= 0 and self.L - self.zone <= r[2] <= self.L
        }

    def stop_between(self, vid, k0, k1):
        ks = self.stopped_steps.get(vid, [])
        return self.dt * (bisect.bisect_right(ks, k1) - bisect.bisect_right(ks, k0))

    def lost_between(self, vid, k0, k1):
        total = 0.0
        for k in range(k0 + 1, k1 + 1):
            r = self.rows(k).get(vid)
            if r is None:
                continue
            if r[1] < 0:
                total += self.dt
            elif r[2] <= self.L:
                total += self.dt * (1.0 - r[3] / self.v_max)
        return total

    def crossings(self, k0, k1):
        n = 0
        for k in range(k0 + 1, k1 + 1):
            prev = self.rows(k - 1)
            for vid, r in self.rows(k).items():
                if r[1] >= 0 and r[2] > self.L:
                    p = prev.get(vid)
                    if p is None or p[1] < 0 or p[2] <= self.L:
                        n += 1
        return n

    def window(self, k_pp, k_p, k):
        vt_p, vt_t = self.vt(k_p), self.vt(k)
        n = len(vt_t)
        return {
            "sum_queue_prev": sum(1 for r in vt_p.values() if r[3] < self.v_queue),
            "sum_queue_now": sum(1 for r in vt_t.values() if r[3] < self.v_queue),
            "wait_accrued_prev_window": sum(self.stop_between(v, k_pp, k_p) for v in vt_p),
            "wait_accrued_this_window": sum(self.stop_between(v, k_p, k) for v in vt_t),
            "cum_wait_at_tp": sum(self.stop_between(v, 0, k_p) for v in vt_p),
            "cum_wait_at_t": sum(self.stop_between(v, 0, k) for v in vt_t),
            "time_lost_prev_window": sum(self.lost_between(v, k_pp, k_p) for v in vt_p),
            "time_lost_this_window": sum(self.lost_between(v, k_p, k) for v in vt_t),
            "avg_speed_ratio_at_t": sum(r[3] / self.v_max for r in vt_t.values()) / n if n else 1.0,
            "throughput_this_window": self.crossings(k_p, k),
            "vehicle_count_at_t": n,
        }

    def arrivals_in(self, k0, k1):
        return sum(1 for k in self.first_seen.values() if k0 < k <= k1)


def rewards_from_window(w, d_hat):
    return {
        "queue": -w["sum_queue_now"],
        "queue-squared": -(w["sum_queue_now"] ** 2),
        "delta-queue": w["sum_queue_prev"] - w["sum_queue_now"],
        "wait-time": -w["wait_accrued_this_window"],
        "delta-wait-time": w["cum_wait_at_tp"] - w["cum_wait_at_t"],
        "wait-time-over-demand": -w["wait_accrued_this_window"] / d_hat,
        "time-lost": -w["time_lost_this_window"],
        "delta-time-lost": w["time_lost_prev_window"] - w["time_lost_this_window"],
        "time-lost-over-demand": -w["time_lost_this_window"] / d_hat,
        "avg-speed": w["avg_speed_ratio_at_t"],
        "avg-speed-times-demand": d_hat * w["avg_speed_ratio_at_t"],
        "throughput": w["throughput_this_window"],
    }

"""Training runs, paired evaluation, best-run selection and report files.

Scores are average stopped time per vehicle over an episode. Every report
is keyed by ``(agent, demand_level, seed)`` and sorted on that key, so
serial and parallel evaluation write identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import neural
from .agent import DQNAgent, epsilon_at, run_training_episode
from .baselines import MaxOccupancyPolicy, SystemDConfig, SystemDPolicy
from .config import DEMAND_LEVELS, EPISODE_SECONDS, ExperimentConfig
from .environment import JunctionEnv
from .rewards import RewardKind
from .sim_core import EpisodeTrace, Network

LEVELS = tuple(DEMAND_LEVELS)
SCORE_COLUMNS = ("agent", "demand_level", "seed", "avg_wait_s")
SUMMARY_COLUMNS = ("agent", "demand_level", "median_s", "mean_s", "q1_s", "q3_s")
PLOT_COLUMNS = ("agent", "demand_level", "statistic", "value")
LOG_COLUMNS = (
    "episode", "phase", "demand_level", "seed", "epsilon",
    "cumulative_reward", "loss", "avg_wait_s", "decisions", "status",
)
BASELINE_NAMES = ("system-d", "max-occupancy")


class VersionError(ValueError):
    """Checkpoint does not fit the current state vector or action set."""


class PairingError(ValueError):
    """Agents were scored on different scenario lists."""


class SelectionError(RuntimeError):
    """No completed run is available to select from."""


@dataclass(frozen=True, order=True)
class ScenarioSpec:
    demand_level: str
    seed: int
    duration: float = EPISODE_SECONDS


@dataclass(frozen=True, order=True)
class ScoreRow:
    agent: str
    demand_level: str
    seed: int
    avg_wait_s: float


@dataclass(frozen=True)
class SummaryRow:
    agent: str
    demand_level: str
    median_s: float
    mean_s: float
    q1_s: float
    q3_s: float


@dataclass(frozen=True)
class RunResult:
    run_id: int
    seed: int
    directory: Path
    failed: bool
    message: str = ""

    @property
    def checkpoint(self) -> Path:
        return self.directory / "checkpoint.jrl"


def default_scenarios(levels: Iterable[str] = LEVELS, seeds: Iterable[int] = range(100)) -> list[ScenarioSpec]:
    seeds = list(seeds)
    return [ScenarioSpec(level, int(s)) for level in levels for s in seeds]


def parse_seeds(text: str) -> list[int]:
    """``"0..99"`` (inclusive), ``"1,5,9"`` or a mix such as ``"0..4,10"``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise ValueError(f"empty seed range {part!r}")
            out.extend(range(lo_i, hi_i + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("no seeds given")
    return out


# -- scoring ------------------------------------------------------------------

def average_wait(source: Network | EpisodeTrace) -> float:
    """Mean stopped time per vehicle that arrived during the episode.

    Vehicles still on the network or in the insertion backlog count with
    the wait accrued so far.
    """
    if isinstance(source, EpisodeTrace):
        last: dict[int, float] = {}
        for row in source.rows:
            last[row[1]] = row[7]
        return sum(last.values()) / len(last) if last else 0.0
    source.settle_backlog()
    vs = source.vehicles
    return sum(v.cumulative_stop_time for v in vs) / len(vs) if vs else 0.0


def average_wait_from_csv(path: str | Path, dt: float) -> float:
    """Recompute the score from an exported trace using only its stopped flags."""
    stopped: dict[str, int] = defaultdict(int)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            stopped[row["vehicle_id"]] += int(row["stopped"])
    return dt * sum(stopped.values()) / len(stopped) if stopped else 0.0


# -- policies -----------------------------------------------------------------

class QPolicy:
    """Greedy policy over a trained Q-network."""

    def __init__(self, params: neural.MlpParams, name: str = "rl"):
        self.params = params
        self.name = name
        self._layers32 = neural.float32_layers(params)

    def check(self, env: JunctionEnv) -> None:
        sizes = self.params.sizes
        if sizes[0] != env.state_dim or sizes[-1] != env.n_actions:
            raise VersionError(
                f"checkpoint maps {sizes[0]} inputs to {sizes[-1]} actions, "
                f"environment has {env.state_dim} inputs and {env.n_actions} actions"
            )

    def __call__(self, env: JunctionEnv) -> int:
        return neural.greedy_action(self.params, env.state(), self._layers32)


def make_policy(agent: str, cfg: ExperimentConfig):
    """Baseline name, checkpoint path, or ``label=path``."""
    if agent == "system-d":
        return SystemDPolicy(SystemDConfig.from_config(cfg.baselines, cfg.stages.min_green))
    if agent == "max-occupancy":
        return MaxOccupancyPolicy()
    label, _, path = agent.partition("=")
    if not path:
        label, path = Path(agent).stem, agent
    params, _ = neural.load_checkpoint(path)
    return QPolicy(params, label)


def rollout(policy: Callable, env: JunctionEnv, scenario: ScenarioSpec) -> float:
    env.reset(scenario.demand_level, scenario.seed)
    done = env.done
    while not done:
        _, _, done, _ = env.step(policy(env))
    return average_wait(env.net)


def _score_chunk(args) -> list[tuple[ScenarioSpec, float]]:
    policy, cfg, scenarios, trace_dir = args
    out = []
    for sc in scenarios:
        env = JunctionEnv(cfg, record=trace_dir is not None, episode_seconds=sc.duration)
        if isinstance(policy, QPolicy):
            policy.check(env)
        score = rollout(policy, env, sc)
        if trace_dir is not None:
            path = Path(trace_dir) / f"{policy.name}_{sc.demand_level}_{sc.seed}.csv"
            with open(path, "w", newline="") as fh:
                env.net.trace.write_csv(fh)
        out.append((sc, score))
    return out


def evaluate(
    policy,
    scenarios: Sequence[ScenarioSpec],
    cfg: ExperimentConfig | None = None,
    workers: int = 1,
    trace_dir: str | Path | None = None,
) -> list[ScoreRow]:
    """Greedy rollout of ``policy`` on every scenario, one score each."""
    cfg = cfg or ExperimentConfig()
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("no scenarios to evaluate")
    if isinstance(policy, QPolicy):
        policy.check(JunctionEnv(cfg))
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    name = getattr(policy, "name", type(policy).__name__)
    if workers <= 1:
        results = _score_chunk((policy, cfg, scenarios, trace_dir))
    else:
        chunks = [scenarios[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = pool.map(_score_chunk, [(policy, cfg, c, trace_dir) for c in chunks if c])
            results = [r for part in parts for r in part]
    return sorted(ScoreRow(name, sc.demand_level, sc.seed, score) for sc, score in results)


# -- reports ------------------------------------------------------------------

def summarize(rows: Iterable[ScoreRow]) -> list[SummaryRow]:
    groups: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in rows:
        groups[(r.agent, r.demand_level)].append(r.avg_wait_s)
    out = []
    for (agent, level), vals in sorted(groups.items(), key=lambda kv: (kv[0][0], _level_key(kv[0][1]))):
        a = np.asarray(vals)
        q1, med, q3 = np.percentile(a, [25, 50, 75])
        out.append(SummaryRow(agent, level, float(med), float(a.mean()), float(q1), float(q3)))
    return out


def _level_key(level: str):
    return (LEVELS.index(level), level) if level in LEVELS else (len(LEVELS), level)


def check_pairing(rows_by_agent: Mapping[str, Sequence[ScoreRow]]) -> list[tuple[str, int]]:
    keys = None
    for agent, rows in rows_by_agent.items():
        k = sorted((r.demand_level, r.seed) for r in rows)
        if keys is None:
            keys, first = k, agent
        elif k != keys:
            raise PairingError(f"agent {agent!r} was scored on different scenarios than {first!r}")
    return keys or []


def _fmt(x: float) -> str:
    return repr(float(x))


def write_scores(path: str | Path, rows: Iterable[ScoreRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for r in sorted(rows):
            w.writerow((r.agent, r.demand_level, r.seed, _fmt(r.avg_wait_s)))


def read_scores(path: str | Path) -> list[ScoreRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SCORE_COLUMNS:
            raise ValueError(f"{path}: expected columns {SCORE_COLUMNS}")
        return [ScoreRow(r["agent"], r["demand_level"], int(r["seed"]), float(r["avg_wait_s"])) for r in reader]


def write_summary(path: str | Path, summary: Iterable[SummaryRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in summary:
            w.writerow((s.agent, s.demand_level, _fmt(s.median_s), _fmt(s.mean_s), _fmt(s.q1_s), _fmt(s.q3_s)))


def write_plot_data(path: str | Path, summary: Iterable[SummaryRow]) -> None:
    """Long format: one statistic per row, ready for box or bar charts."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for s in summary:
            for stat in ("median_s", "mean_s", "q1_s", "q3_s"):
                w.writerow((s.agent, s.demand_level, stat, _fmt(getattr(s, stat))))


def write_manifest(path: str | Path, cfg: ExperimentConfig, rows: Iterable[ScoreRow], **extra) -> None:
    rows = list(rows)
    manifest = {
        "config_hash": cfg.digest(),
        "config": cfg.to_dict(),
        "agents": sorted({r.agent for r in rows}),
        "levels": sorted({r.demand_level for r in rows}, key=_level_key),
        "seeds": sorted({r.seed for r in rows}),
        **extra,
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def write_report(out_dir: str | Path, rows: Sequence[ScoreRow], cfg: ExperimentConfig) -> list[SummaryRow]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(rows)
    write_scores(out / "scores.csv", rows)
    write_summary(out / "summary.csv", summary)
    write_manifest(out / "manifest.json", cfg, rows)
    return summary


def compare(
    rows_by_agent: Mapping[str, Sequence[ScoreRow]], out_dir: str | Path, cfg: ExperimentConfig
) -> list[SummaryRow]:
    """Write the paired report for two or more scored agents."""
    if len(rows_by_agent) < 2:
        raise ValueError("compare needs at least two agents")
    check_pairing(rows_by_agent)
    rows = sorted(r for rs in rows_by_agent.values() for r in rs)
    summary = write_report(out_dir, rows, cfg)
    write_plot_data(Path(out_dir) / "plot.csv", summary)
    return summary


def paired_wins(a: Sequence[ScoreRow], b: Sequence[ScoreRow], level: str | None = None) -> tuple[int, int]:
    """How often ``a`` scores strictly lower than ``b`` on the same scenario."""
    check_pairing({"a": a, "b": b})
    bmap = {(r.demand_level, r.seed): r.avg_wait_s for r in b}
    pairs = [(r.avg_wait_s, bmap[(r.demand_level, r.seed)]) for r in a if level in (None, r.demand_level)]
    return sum(x < y for x, y in pairs), len(pairs)


# -- training -----------------------------------------------------------------

def curriculum_phase(episode: int, n_episodes: int, curriculum) -> int:
    """Phase index of 1-based ``episode``: the first bound with episode/n <= bound."""
    frac = episode / n_episodes
    for i, (bound, _) in enumerate(curriculum):
        if frac <= bound + 1e-12:
            return i
    return len(curriculum) - 1


def curriculum_schedule(n_episodes: int, curriculum, rng: np.random.Generator) -> list[tuple[int, str, int]]:
    """``(phase, demand_level, episode_seed)`` for every episode."""
    out = []
    for ep in range(1, n_episodes + 1):
        phase = curriculum_phase(ep, n_episodes, curriculum)
        levels = curriculum[phase][1]
        level = levels[int(rng.integers(len(levels)))]
        out.append((phase, level, int(rng.integers(2**31))))
    return out


def train_run(
    reward: RewardKind | str,
    cfg: ExperimentConfig,
    run_seed: int,
    out_dir: str | Path,
    run_id: int = 0,
    episodes: int | None = None,
    progress: Callable[[int, object], None] | None = None,
) -> RunResult:
    """Train one agent through the curriculum and save its checkpoint and log.

    A non-finite loss or reward stops the run; it is marked failed in the
    log and in ``meta.json`` rather than raised.
    """
    kind = RewardKind.parse(reward)
    n = int(episodes if episodes is not None else cfg.training.episodes)
    if n < 1:
        raise ValueError("episodes must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    agent_seq, sched_seq = np.random.SeedSequence(run_seed).spawn(2)
    schedule = curriculum_schedule(n, cfg.training.curriculum, np.random.default_rng(sched_seq))
    env = JunctionEnv(cfg, kind)
    agent = DQNAgent.create(env.state_dim, env.n_actions, cfg.agent, agent_seq)
    rows, failed, message = [], False, ""
    for ep, (phase, level, seed) in enumerate(schedule, start=1):
        eps = epsilon_at(ep - 1, n, cfg.agent)
        try:
            log = run_training_episode(env, agent, eps, level, seed)
        except (neural.NumericError, FloatingPointError) as exc:
            failed, message = True, f"{type(exc).__name__}: {exc}"
            rows.append((ep, phase, level, seed, _fmt(eps), "", "", "", "", "failed"))
            break
        rows.append((
            ep, phase, level, seed, _fmt(eps), _fmt(log.cumulative_reward),
            _fmt(log.loss), _fmt(log.avg_wait), log.decisions, "ok",
        ))
        if progress is not None:
            progress(ep, log)
    with open(out / "log.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        w.writerows(rows)
    neural.save_checkpoint(out / "checkpoint.jrl", agent.params, agent.adam)
    meta = {
        "run_id": run_id,
        "reward": kind.value,
        "seed": run_seed,
        "episodes": n,
        "episodes_completed": len(rows) - failed,
        "config_hash": cfg.digest(),
        "curriculum": [[b, list(lv)] for b, lv in cfg.training.curriculum],
        "state_dim": env.state_dim,
        "n_actions": env.n_actions,
        "status": "failed" if failed else "ok",
        "message": message,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return RunResult(run_id, run_seed, out, failed, message)


def run_seeds(seed: int, runs: int) -> list[int]:
    """Independent per-run seeds derived from one master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(runs)]


def select_best(results: Mapping[int, Sequence[ScoreRow] | None]) -> int:
    """Run with the lowest mean of per-level median scores; ties go to the lowest id.

    Failed runs are passed as ``None`` and never selected.
    """
    best_id, best_val = None, math.inf
    for run_id in sorted(results):
        rows = results[run_id]
        if rows is None:
            continue
        by_level: dict[str, list[float]] = defaultdict(list)
        for r in rows:
            by_level[r.demand_level].append(r.avg_wait_s)
        if not by_level:
            continue
        val = float(np.mean([np.median(v) for v in by_level.values()]))
        if val < best_val:
            best_id, best_val = run_id, val
    if best_id is None:
        raise SelectionError("every training run failed")
    return best_id

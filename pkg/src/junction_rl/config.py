"""Configuration dataclasses and the YAML loader.

One file describes the junction geometry, the signal plan, sensing
thresholds, reward constants, agent hyperparameters and the training
schedule. Every section is optional; missing keys fall back to the
defaults below.

Key schema (all keys optional)::

    junction:
      v_max: 13.4             # m/s
      vehicle_length: 4.5     # m
      min_gap: 2.5            # m
      accel: 2.6              # m/s^2
      decel: 4.5              # m/s^2
      driver_imperfection: 0.0
      sim_step: 0.6           # s
      box_clearance: 2.0      # s spent in the junction box before removal
      arms:
        - name: E
          length: 200.0
          lanes: [[left, through], [right]]
          turning: {left: 0.15, through: 0.70, right: 0.15}
    demand:
      arm_split: {E: 0.35, W: 0.35, N: 0.15, S: 0.15}
      levels: {low: 1714, medium: 2117, high: 2400}
    stages:
      served: {1: [E.right, W.right], 2: [E.left, E.through, ...], 3: [], 4: [...]}
      agent_choosable: [2, 4]
      intermediate_paths: {"4-2": [1]}
      min_green: {1: 7, 2: 7, 3: 7, 4: 7}
      intergreen: 5           # scalar, or {"2-4": 5, ...}
      amber: 3
      extension_quantum: 0.6
      initial_stage: 2
    sensing: {zone_length: 50, loop_length: 2, v_stop: 0.1, v_queue: 0.5, history_slots: 20}
    rewards: {d_floor: 0.01, estimation_window: 300}
    agent: {gamma: 0.8, lr: 1.0e-5, memory_capacity: 10000, batch_size: 64, ...}
    baselines: {gap_timeout: 1.5, max_green: {2: 40, 4: 30}}
    training: {episodes: 400, curriculum: [[0.4, [low]], [0.7, [medium]], [1.0, [low, medium, high]]]}
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

MOVEMENTS = ("left", "through", "right")

DEMAND_LEVELS = {"low": 1714.0, "medium": 2117.0, "high": 2400.0}

EPISODE_SECONDS = 1800.0

RATIO_TOL = 1e-9


class ConfigError(ValueError):
    """Raised when a configuration value breaks an invariant."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ApproachSpec:
    name: str
    length: float = 200.0
    # allowed movements per lane, lane 0 is the nearside lane
    lanes: tuple[tuple[str, ...], ...] = (MOVEMENTS,)
    turning: dict[str, float] = field(
        default_factory=lambda: {"left": 0.15, "through": 0.70, "right": 0.15}
    )

    @property
    def lane_count(self) -> int:
        return len(self.lanes)


def _default_arms() -> tuple[ApproachSpec, ...]:
    main = (("left", "through"), ("right",))
    side = (MOVEMENTS,)
    return (
        ApproachSpec("E", 200.0, main),
        ApproachSpec("W", 200.0, main),
        ApproachSpec("N", 200.0, side),
        ApproachSpec("S", 200.0, side),
    )


@dataclass(frozen=True)
class JunctionConfig:
    arms: tuple[ApproachSpec, ...] = field(default_factory=_default_arms)
    v_max: float = 13.4
    vehicle_length: float = 4.5
    min_gap: float = 2.5
    accel: float = 2.6
    decel: float = 4.5
    driver_imperfection: float = 0.0
    sim_step: float = 0.6
    box_clearance: float = 2.0

    def validate(self) -> None:
        if not self.arms:
            raise ConfigError("arms", "at least one arm is required")
        for key in ("v_max", "vehicle_length", "accel", "decel", "sim_step"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, f"must be > 0, got {getattr(self, key)}")
        if self.min_gap < 0:
            raise ConfigError("min_gap", "must be >= 0")
        if not 0.0 <= self.driver_imperfection <= 1.0:
            raise ConfigError("driver_imperfection", "must lie in [0, 1]")
        if self.box_clearance < 0:
            raise ConfigError("box_clearance", "must be >= 0")
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise ConfigError("arms", f"duplicate arm names {names}")
        for arm in self.arms:
            prefix = f"arms.{arm.name}"
            if not arm.length > 0:
                raise ConfigError(f"{prefix}.length", f"must be > 0, got {arm.length}")
            if arm.lane_count < 1:
                raise ConfigError(f"{prefix}.lanes", "lane count must be >= 1")
            unknown = set(arm.turning) - set(MOVEMENTS)
            if unknown:
                raise ConfigError(f"{prefix}.turning", f"unknown movements {sorted(unknown)}")
            if any(r < 0 for r in arm.turning.values()):
                raise ConfigError(f"{prefix}.turning", "ratios must be non-negative")
            total = sum(arm.turning.values())
            if abs(total - 1.0) > RATIO_TOL:
                raise ConfigError(f"{prefix}.turning", f"ratios sum to {total:g}")
            for lane in arm.lanes:
                bad = set(lane) - set(MOVEMENTS)
                if bad or not lane:
                    raise ConfigError(f"{prefix}.lanes", f"invalid lane movements {lane}")
            covered = {m for lane in arm.lanes for m in lane}
            for m, r in arm.turning.items():
                if r > 0 and m not in covered:
                    raise ConfigError(f"{prefix}.lanes", f"no lane serves movement {m!r}")

    def arm_index(self, name: str) -> int:
        for i, arm in enumerate(self.arms):
            if arm.name == name:
                return i
        raise KeyError(name)


@dataclass(frozen=True)
class DemandProfile:
    """Poisson arrivals: ``total_rate`` veh/h split across arms."""

    total_rate: float
    arm_split: tuple[float, ...]

    def validate(self, n_arms: int | None = None) -> None:
        if self.total_rate < 0 or not math.isfinite(self.total_rate):
            raise ConfigError("total_rate", f"must be finite and >= 0, got {self.total_rate}")
        if any(s < 0 for s in self.arm_split):
            raise ConfigError("arm_split", "fractions must be non-negative")
        total = sum(self.arm_split)
        if abs(total - 1.0) > RATIO_TOL:
            raise ConfigError("arm_split", f"fractions sum to {total:g}")
        if n_arms is not None and len(self.arm_split) != n_arms:
            raise ConfigError("arm_split", f"expected {n_arms} fractions, got {len(self.arm_split)}")

    @property
    def mean_headway(self) -> float:
        return math.inf if self.total_rate == 0 else 3600.0 / self.total_rate


@dataclass(frozen=True)
class StageConfig:
    served: dict[int, tuple[str, ...]] = field(
        default_factory=lambda: {
            1: ("E.right", "W.right"),
            2: ("E.left", "E.through", "W.left", "W.through"),
            3: (),
            4: tuple(f"{a}.{m}" for a in ("N", "S") for m in MOVEMENTS),
        }
    )
    agent_choosable: tuple[int, ...] = (2, 4)
    intermediate_paths: dict[tuple[int, int], tuple[int, ...]] = field(
        default_factory=lambda: {(4, 2): (1,)}
    )
    min_green: dict[int, float] = field(default_factory=lambda: {1: 7.0, 2: 7.0, 3: 7.0, 4: 7.0})
    intergreen: dict[tuple[int, int], float] | float = 5.0
    amber: float = 3.0
    extension_quantum: float = 0.6
    initial_stage: int = 2


@dataclass(frozen=True)
class SensingConfig:
    zone_length: float = 50.0
    loop_length: float = 2.0
    v_stop: float = 0.1
    v_queue: float = 0.5
    history_slots: int = 20


@dataclass(frozen=True)
class RewardConfig:
    d_floor: float = 0.01
    estimation_window: float = 300.0


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.8
    lr: float = 1e-5
    memory_capacity: int = 10_000
    batch_size: int = 64
    target_sync: int = 10
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.75
    updates_per_episode: int = 1
    hidden: tuple[int, ...] = (500, 1000)

    def validate(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("agent.gamma", "must lie in [0, 1]")
        if self.batch_size > self.memory_capacity:
            raise ConfigError("agent.batch_size", "must not exceed memory_capacity")
        if self.batch_size < 1:
            raise ConfigError("agent.batch_size", "must be >= 1")
        if self.target_sync < 1:
            raise ConfigError("agent.target_sync", "must be >= 1")
        if self.updates_per_episode < 0:
            raise ConfigError("agent.updates_per_episode", "must be >= 0")
        if not self.lr > 0:
            raise ConfigError("agent.lr", "must be > 0")


@dataclass(frozen=True)
class BaselineConfig:
    gap_timeout: float = 1.5
    max_green: dict[int, float] = field(default_factory=lambda: {2: 40.0, 4: 30.0})


@dataclass(frozen=True)
class TrainingConfig:
    episodes: int = 400
    # (upper fraction bound, demand levels drawn uniformly inside the phase)
    curriculum: tuple[tuple[float, tuple[str, ...]], ...] = (
        (0.4, ("low",)),
        (0.7, ("medium",)),
        (1.0, ("low", "medium", "high")),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    junction: JunctionConfig = field(default_factory=JunctionConfig)
    arm_split: tuple[float, ...] = (0.35, 0.35, 0.15, 0.15)
    levels: dict[str, float] = field(default_factory=lambda: dict(DEMAND_LEVELS))
    stages: StageConfig = field(default_factory=StageConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def validate(self) -> None:
        self.junction.validate()
        DemandProfile(0.0, self.arm_split).validate(len(self.junction.arms))
        self.agent.validate()
        for arm in self.junction.arms:
            if self.sensing.zone_length > arm.length:
                raise ConfigError("sensing.zone_length", f"exceeds length of arm {arm.name}")
        for name, rate in self.levels.items():
            if rate < 0:
                raise ConfigError(f"demand.levels.{name}", "must be >= 0")

    def demand(self, level: str | float) -> DemandProfile:
        rate = self.levels[level] if isinstance(level, str) else float(level)
        return DemandProfile(rate, self.arm_split)

    def to_dict(self) -> dict[str, Any]:
        return _jsonable(dataclasses.asdict(self))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {_key(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _key(k: Any) -> str:
    if isinstance(k, tuple):
        return "-".join(str(p) for p in k)
    return str(k)


def _pair(key: Any) -> tuple[int, int]:
    if isinstance(key, (list, tuple)):
        a, b = key
    else:
        a, b = str(key).split("-")
    return int(a), int(b)


def _build_arms(raw: list[dict]) -> tuple[ApproachSpec, ...]:
    arms = []
    for item in raw:
        lanes = item.get("lanes", [list(MOVEMENTS)])
        if isinstance(lanes, int):
            lanes = [list(MOVEMENTS)] * lanes
        arms.append(
            ApproachSpec(
                name=str(item["name"]),
                length=float(item.get("length", 200.0)),
                lanes=tuple(tuple(lane) for lane in lanes),
                turning={str(k): float(v) for k, v in item.get("turning", {}).items()}
                or {"left": 0.15, "through": 0.70, "right": 0.15},
            )
        )
    return tuple(arms)


def config_from_dict(raw: dict[str, Any] | None) -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig` from a plain mapping."""
    raw = dict(raw or {})
    base = ExperimentConfig()

    j = dict(raw.get("junction", {}))
    arms = _build_arms(j.pop("arms")) if "arms" in j else base.junction.arms
    junction = dataclasses.replace(base.junction, arms=arms, **{k: float(v) for k, v in j.items()})

    demand = raw.get("demand", {})
    if "arm_split" in demand:
        split = demand["arm_split"]
        if isinstance(split, dict):
            split = tuple(float(split[a.name]) for a in arms)
        arm_split = tuple(float(s) for s in split)
    else:
        arm_split = base.arm_split
    levels = {**base.levels, **{k: float(v) for k, v in demand.get("levels", {}).items()}}

    s = dict(raw.get("stages", {}))
    stages = base.stages
    if s:
        kw: dict[str, Any] = {}
        if "served" in s:
            kw["served"] = {int(k): tuple(v) for k, v in s["served"].items()}
        if "agent_choosable" in s:
            kw["agent_choosable"] = tuple(int(x) for x in s["agent_choosable"])
        if "intermediate_paths" in s:
            kw["intermediate_paths"] = {
                _pair(k): tuple(int(x) for x in v) for k, v in s["intermediate_paths"].items()
            }
        if "min_green" in s:
            mg = s["min_green"]
            if isinstance(mg, dict):
                kw["min_green"] = {**stages.min_green, **{int(k): float(v) for k, v in mg.items()}}
            else:
                kw["min_green"] = {k: float(mg) for k in stages.min_green}
        if "intergreen" in s:
            ig = s["intergreen"]
            kw["intergreen"] = (
                {_pair(k): float(v) for k, v in ig.items()} if isinstance(ig, dict) else float(ig)
            )
        for key in ("amber", "extension_quantum"):
            if key in s:
                kw[key] = float(s[key])
        if "initial_stage" in s:
            kw["initial_stage"] = int(s["initial_stage"])
        stages = dataclasses.replace(stages, **kw)

    sensing = dataclasses.replace(base.sensing, **raw.get("sensing", {}))
    rewards = dataclasses.replace(base.rewards, **raw.get("rewards", {}))

    a = dict(raw.get("agent", {}))
    if "hidden" in a:
        a["hidden"] = tuple(int(h) for h in a["hidden"])
    agent = dataclasses.replace(base.agent, **a)

    b = dict(raw.get("baselines", {}))
    if "max_green" in b:
        b["max_green"] = {**base.baselines.max_green, **{int(k): float(v) for k, v in b["max_green"].items()}}
    baselines = dataclasses.replace(base.baselines, **b)

    t = dict(raw.get("training", {}))
    if "curriculum" in t:
        t["curriculum"] = tuple((float(bound), tuple(lv)) for bound, lv in t["curriculum"])
    training = dataclasses.replace(base.training, **t)

    cfg = ExperimentConfig(
        junction=junction,
        arm_split=arm_split,
        levels=levels,
        stages=stages,
        sensing=sensing,
        rewards=rewards,
        agent=agent,
        baselines=baselines,
        training=training,
    )
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration file must contain a mapping")
    return config_from_dict(raw)

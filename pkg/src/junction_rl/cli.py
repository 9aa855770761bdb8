"""Command-line entry point: ``train``, ``evaluate``, ``compare``, ``replay``.

Successful commands print one JSON object on stdout. Failures print a
single ``error: {...}`` JSON line on stderr and exit with status 2 (usage
errors keep argparse's own status 2 as well).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness as H
from .config import ConfigError, load_config
from .rewards import RewardKind


def _levels(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment configuration (defaults if omitted)")
    p.add_argument("--out", required=True, help="output directory")


def _add_scenarios(p: argparse.ArgumentParser) -> None:
    p.add_argument("--levels", default="low,medium,high", help="comma-separated demand levels")
    p.add_argument("--seeds", default="0..99", help='scenario seeds, e.g. "0..99" or "1,2,5"')
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="junction-rl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one or more DQN runs through the curriculum")
    p.add_argument("--reward", required=True, choices=[k.value for k in RewardKind])
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="master seed for all runs")
    p.add_argument("--episodes", type=int, help="override training.episodes")
    p.add_argument("--select", action="store_true",
                   help="evaluate every run on the scenarios below and record the best")
    _add_common(p)
    _add_scenarios(p)

    p = sub.add_parser("evaluate", help="score one agent on paired scenarios")
    p.add_argument("--agent", required=True, help="checkpoint path, label=path, system-d or max-occupancy")
    p.add_argument("--trace-dir", help="also write one trace CSV per scenario here")
    _add_common(p)
    _add_scenarios(p)

    p = sub.add_parser("compare", help="paired report over several agents")
    p.add_argument("--agents", help="comma-separated agent specs, as for evaluate")
    p.add_argument("--scores", nargs="*", default=[], help="existing scores.csv files to merge")
    _add_common(p)
    _add_scenarios(p)

    p = sub.add_parser("replay", help="recompute the score of an exported trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--config", help="configuration the trace was produced with")
    return parser


def cmd_train(args) -> dict:
    cfg = load_config(args.config)
    out = Path(args.out)
    if args.runs < 1:
        raise ValueError("--runs must be >= 1")
    results = []
    for run_id, seed in enumerate(H.run_seeds(args.seed, args.runs)):
        res = H.train_run(args.reward, cfg, seed, out / f"run_{run_id:02d}", run_id, args.episodes)
        results.append(res)
    report = {
        "runs": [
            {"run_id": r.run_id, "seed": r.seed, "status": "failed" if r.failed else "ok",
             "checkpoint": str(r.checkpoint)}
            for r in results
        ]
    }
    if args.select:
        scenarios = H.default_scenarios(_levels(args.levels), H.parse_seeds(args.seeds))
        scored = {}
        for r in results:
            if r.failed:
                scored[r.run_id] = None
                continue
            policy = H.QPolicy(H.neural.load_checkpoint(r.checkpoint)[0], f"run_{r.run_id:02d}")
            rows = H.evaluate(policy, scenarios, cfg, args.workers)
            H.write_report(r.directory / "evaluation", rows, cfg)
            scored[r.run_id] = rows
        best = H.select_best(scored)
        report["best_run"] = best
        (out / "best.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def cmd_evaluate(args) -> dict:
    cfg = load_config(args.config)
    policy = H.make_policy(args.agent, cfg)
    scenarios = H.default_scenarios(_levels(args.levels), H.parse_seeds(args.seeds))
    rows = H.evaluate(policy, scenarios, cfg, args.workers, args.trace_dir)
    summary = H.write_report(args.out, rows, cfg)
    return {"agent": policy.name, "scenarios": len(rows),
            "medians": {s.demand_level: s.median_s for s in summary}}


def cmd_compare(args) -> dict:
    cfg = load_config(args.config)
    by_agent: dict[str, list] = {}
    for path in args.scores:
        for row in H.read_scores(path):
            by_agent.setdefault(row.agent, []).append(row)
    if args.agents:
        scenarios = H.default_scenarios(_levels(args.levels), H.parse_seeds(args.seeds))
        for agent_arg in args.agents.split(","):
            policy = H.make_policy(agent_arg.strip(), cfg)
            by_agent[policy.name] = H.evaluate(policy, scenarios, cfg, args.workers)
    summary = H.compare(by_agent, args.out, cfg)
    return {"agents": sorted(by_agent),
            "medians": {f"{s.agent}/{s.demand_level}": s.median_s for s in summary}}


def cmd_replay(args) -> dict:
    cfg = load_config(args.config)
    dt = cfg.junction.sim_step
    path = Path(args.trace)
    if not path.exists():
        raise FileNotFoundError(f"no trace file {path}")
    steps, vehicles = set(), set()
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != H.EpisodeTrace.CSV_COLUMNS:
            raise ValueError(f"{path}: not a trace CSV")
        for line in fh:
            step, vid = line.split(",", 2)[:2]
            steps.add(int(step))
            vehicles.add(vid)
    return {"trace": str(path), "steps": len(steps), "vehicles": len(vehicles),
            "avg_wait_s": H.average_wait_from_csv(path, dt)}


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "compare": cmd_compare, "replay": cmd_replay}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
    except (ConfigError, H.VersionError, H.PairingError, H.SelectionError,
            H.neural.CheckpointError, ValueError, OSError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print("error: " + json.dumps(err, sort_keys=True), file=sys.stderr)
        return 2
    print(json.dumps({"status": "ok", "command": args.command, **result}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())

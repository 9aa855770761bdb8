"""
Training an agent and comparing it with the references
======================================================

A short run of the average-speed agent through the demand curriculum,
then a paired evaluation against System D. The full experiment uses 400
episodes and 100 seeds per level; the command line does the same with
``junction-rl train`` and ``junction-rl compare``.
"""
import tempfile
from pathlib import Path

from junction_rl import harness as H
from junction_rl import neural
from junction_rl.config import ExperimentConfig

cfg = ExperimentConfig()
out = Path(tempfile.mkdtemp(prefix="junction_rl_"))


def progress(ep, log):
    if ep % 5 == 0:
        print(f"episode {ep:3d} {log.demand:6s} eps {log.epsilon:.2f} reward {log.cumulative_reward:7.1f} "
              f"wait {log.avg_wait:6.1f}s")


run = H.train_run("avg-speed", cfg, run_seed=0, out_dir=out / "run", episodes=20, progress=progress)
print("checkpoint:", run.checkpoint, "failed:", run.failed)

params, _ = neural.load_checkpoint(run.checkpoint)
scenarios = H.default_scenarios(("low", "medium"), range(3))
rows = {
    "avg-speed": H.evaluate(H.QPolicy(params, "avg-speed"), scenarios, cfg),
    "system-d": H.evaluate(H.make_policy("system-d", cfg), scenarios, cfg),
}
# Twenty episodes is only a smoke run: the agent has barely left random
# exploration and waits far longer than System D.
for s in H.compare(rows, out / "report", cfg):
    print(f"{s.agent:10s} {s.demand_level:7s} median wait {s.median_s:6.1f}s")
print("report written to", out / "report")

"""
The stage controller
====================

Stages 2 (main road) and 4 (side road) are the only ones an agent can ask
for. Going from 4 back to 2 always runs the short right-turn Stage 1 in
between, with an intergreen of amber then all-red around each change.
"""
from junction_rl import signal_control as ctl
from junction_rl.config import ExperimentConfig

cfg = ExperimentConfig()
plan = ctl.StagePlan.from_config(cfg.stages, cfg.junction)
print("min green", plan.min_green_ticks(2), "ticks; intergreen", plan.intergreen_ticks(2, 4), "ticks;",
      "amber", plan.amber_ticks, "ticks")


def summary(ind):
    green = sorted(m for m, c in ind.items() if c == "G")
    amber = sorted(m for m, c in ind.items() if c == "A")
    return f"green={','.join(green) or '-'}  amber={','.join(amber) or '-'}"


state = ctl.initial_state(plan, 4)
for _ in range(12):
    state, _ = ctl.tick(state, plan)
print("legal after minimum green:", sorted(ctl.legal_actions(state, plan)))

# %%
# Request Stage 2 and print every change of indications.
state = ctl.request_stage(state, 2, plan)
last = None
for k in range(60):
    ind = ctl.indications(state, plan)
    if summary(ind) != last:
        last = summary(ind)
        print(f"tick {k:2d}  stage {state.active_stage}  {last}")
    state, _ = ctl.tick(state, plan)

# %%
# Requests outside the legal set are refused.
try:
    ctl.request_stage(ctl.initial_state(plan), 4, plan)
except ctl.RequestRejected as exc:
    print("rejected:", exc)

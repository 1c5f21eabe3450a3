"""An attacker pushes the actuators toward their limits and hides the alarm flag.

The plant-side check predicts the one-step reachable set and switches to the
emergency controller before the state can leave the certified region.

Run: python3 demos/02_actuation_attack.py
"""

from ddsafe.config import load_config
from ddsafe.pipeline import build
from ddsafe.sim import run_scenario

cfg = load_config()
art = build(cfg)
log = run_scenario(art.loop, cfg.scenario("attack-actuation"))

print(" k   x_1     x_2    flag safe  mode       level")
for k in range(90, 125):
    x = log.x_true[k]
    print(f"{k:3d} {x[0]:7.4f} {x[1]:7.4f}  {int(log.flag[k])}    {int(log.one_step_safe[k])}  "
          f"{log.controller_tag[k]:10s} {log.j_index[k]}")

first = log.emergency.index(True)
back = log.ignore.index(True)
print(f"emergency from step {first}, back in the terminal set and ignoring the alarm at {back}")
print(f"run safe: {log.ok}")

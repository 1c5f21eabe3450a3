"""Repeat both attacks over many disturbance sequences and count violations.

Run: python3 demos/04_seed_sweep.py [n_seeds]
"""

import sys

from ddsafe.config import load_config
from ddsafe.pipeline import build
from ddsafe.sim import run_scenario

n = int(sys.argv[1]) if len(sys.argv) > 1 else 20
cfg = load_config()
art = build(cfg)
for name in ("nominal", "attack-actuation", "attack-measurement"):
    logs = [run_scenario(art.loop, cfg.scenario(name), seed=s) for s in range(n)]
    bad = sum(not lg.ok for lg in logs)
    emerg = sum(any(lg.emergency) for lg in logs)
    print(f"{name:20s} seeds {n}  violations {bad}  runs with emergency {emerg}")

"""A slow ramp is added to the measured tank level.

Small offsets hide inside the noise margin; once the received state leaves the
predicted reachable set the anomaly flag goes up and the plant switches over.

Run: python3 demos/03_measurement_attack.py
"""

from ddsafe.config import load_config
from ddsafe.pipeline import build
from ddsafe.sim import run_scenario

cfg = load_config()
art = build(cfg)
log = run_scenario(art.loop, cfg.scenario("attack-measurement"))

print(" k   x_1 true  x_1 received  anomaly  mode")
for k in range(92, 122):
    print(f"{k:3d} {log.x_true[k][0]:9.4f} {log.x_received[k][0]:12.4f}     "
          f"{int(log.anomaly[k])}     {log.controller_tag[k]}")

print(f"first detection at step {log.anomaly.index(True)}")
print(f"alarm ignored {sum(log.ignore)} time(s); run safe: {log.ok}")

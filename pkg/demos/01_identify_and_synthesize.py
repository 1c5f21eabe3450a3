"""Collect data from the two-tank plant, build the model set and the set family.

Run: python3 demos/01_identify_and_synthesize.py
"""

import numpy as np

from ddsafe.config import load_config
from ddsafe.datamodel import contains_model, rank_ok, stack
from ddsafe.pipeline import collect, identify, synthesize
from ddsafe.setops import hpolytope_vertices_2d, polygon_area, support

cfg = load_config()

# Two short random-input experiments are all the data we get.
data = collect(cfg)
d = stack(data)
print(f"{len(data.trajectories)} trajectories, {d.T} samples, rank condition {rank_ok(d)}")

# Every (A, B) consistent with the data and the noise bound.
ms = identify(cfg, data)
print(f"model set: {ms.mz.n_generators} generators, {len(ms.vertices)} vertex models")
print(f"true plant inside: {contains_model(ms, cfg.A, cfg.B)}")
print("center model A:\n", np.round(ms.A_center, 4))

# Terminal set plus N one-step controllable sets, robust for every vertex model.
term, fam = synthesize(cfg, ms)
print(f"terminal gain:\n{np.round(term.gain, 3)}")
print(f"terminal set half-widths: {[round(support(fam.t0, e), 4) for e in np.eye(2)]}")
for j in (0, 1, 5, 10, 20, fam.N):
    area = polygon_area(hpolytope_vertices_2d(fam.state_poly(j)))
    print(f"level {j:3d}: area {area:.4f}")

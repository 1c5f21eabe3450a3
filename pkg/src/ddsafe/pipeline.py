"""Config-driven wiring: collect data, identify the model set, synthesize, assemble the loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import ScenarioConfig
from .controllers import TrackingController, design_tracking
from .datamodel import ModelSet, TrajectorySet, build_model_set, rank_ok, stack
from .sim import ClosedLoop, PlantModel
from .stc import RoscFamily, TerminalController, synth_family, synth_terminal

log = logging.getLogger(__name__)


def collect(cfg: ScenarioConfig, seed: Optional[int] = None) -> TrajectorySet:
    """Random admissible inputs (scaled by the excitation amplitude) from the origin."""
    rng = np.random.default_rng(cfg.data.seed if seed is None else seed)
    w = cfg.w()
    lo = cfg.u_lower * cfg.data.amplitude
    hi = cfg.u_upper * cfg.data.amplitude
    trajs = []
    for _ in range(cfg.data.n_trajectories):
        Ns = cfg.data.n_samples
        U = rng.uniform(lo, hi, size=(Ns, cfg.m)).T
        beta = rng.uniform(-1.0, 1.0, size=(Ns, w.n_generators))
        X = np.zeros((cfg.n, Ns + 1))
        for k in range(Ns):
            X[:, k + 1] = cfg.A @ X[:, k] + cfg.B @ U[:, k] + w.center + w.generators @ beta[k]
        trajs.append((U, X))
    return TrajectorySet(trajs)


def identify(cfg: ScenarioConfig, data: TrajectorySet) -> ModelSet:
    ms = build_model_set(stack(data), cfg.w())
    return ms.with_vertices(cfg.synth.vertex_budget, cfg.synth.max_vertex_bits)


def synthesize(cfg: ScenarioConfig, ms: ModelSet, levels: Optional[int] = None):
    s = cfg.synth
    x_set, u_set, w = cfg.x_set(), cfg.u_set(), cfg.w()
    term, t0 = synth_terminal(ms, x_set, u_set, w, Q=cfg.weight(s.terminal_Q, cfg.n),
                              R=cfg.weight(s.terminal_R, cfg.m), rci_eps=s.rci_eps,
                              rci_margin=s.rci_margin, order=s.rci_order)
    N = s.levels if levels is None else levels
    fam = synth_family(ms, term, t0, x_set, u_set, w, N, n_angles=s.template_angles)
    return term, fam


def tracker(cfg: ScenarioConfig, ms: ModelSet) -> TrackingController:
    return design_tracking(ms, cfg.u_set(), cfg.weight(cfg.tracking_Q, cfg.n),
                           cfg.weight(cfg.tracking_R, cfg.m))


def assemble(cfg: ScenarioConfig, ms: ModelSet, fam: RoscFamily,
             seed: Optional[int] = None) -> ClosedLoop:
    if fam.terminal is None:
        raise ValueError("family carries no terminal controller")
    return ClosedLoop(cfg.plant(seed), ms, fam, fam.terminal, tracker(cfg, ms), cfg.x_set(),
                      cfg.u_set(), cfg.w())


@dataclass
class Artifacts:
    data: TrajectorySet
    ms: ModelSet
    fam: RoscFamily
    loop: ClosedLoop


def build(cfg: ScenarioConfig, levels: Optional[int] = None) -> Artifacts:
    """Everything from one config: data, model set, family and the closed loop."""
    data = collect(cfg)
    if not rank_ok(stack(data)):
        raise ValueError("collected data fails the rank condition; raise n_samples or amplitude")
    ms = identify(cfg, data)
    _, fam = synthesize(cfg, ms, levels)
    return Artifacts(data, ms, fam, assemble(cfg, ms, fam))

"""Closed-loop simulation: plant, attacked channels, switching logic and logs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .controllers import TrackingController
from .datamodel import ModelSet
from .reach import SafetyVerdict, detect, verify_safety
from .setops import HPolytope, Zonotope
from .stc import ControlError, RoscFamily, TerminalController, control, membership_index

CHANNELS = ("actuation", "measurement", "flag")


class SimError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlantModel:
    """Ground truth x+ = A x + B u + w. Only the simulator sees it."""

    A: np.ndarray
    B: np.ndarray
    w: Zonotope
    seed: int = 0
    mode: str = "uniform"  # or "vertex" for extreme disturbances

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or self.w.dim != n:
            raise SimError("plant matrices and disturbance have inconsistent shapes")
        if self.mode not in ("uniform", "vertex"):
            raise SimError(f"unknown disturbance mode {self.mode!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    def disturbance(self, k: int) -> np.ndarray:
        """w_k, a pure function of (seed, k)."""
        rng = np.random.default_rng([int(self.seed), int(k)])
        p = self.w.n_generators
        if self.mode == "vertex":
            beta = rng.choice([-1.0, 1.0], size=p)
        else:
            beta = rng.uniform(-1.0, 1.0, size=p)
        return self.w.center + self.w.generators @ beta


def step_plant(p: PlantModel, x, u, k: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if x.size != p.A.shape[0] or u.size != p.B.shape[1]:
        raise SimError("state or input size does not match the plant")
    return p.A @ x + p.B @ u + p.disturbance(k)


@dataclass(frozen=True)
class AttackScript:
    """Additive injection (or flag override) active on steps window[0]..window[1]."""

    channel: str
    window: Tuple[int, int]
    payload: Callable

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise SimError(f"unknown attack channel {self.channel!r}")
        if self.window[0] > self.window[1]:
            raise SimError("attack window is empty")

    def active(self, k: int) -> bool:
        return self.window[0] <= k <= self.window[1]

    def __call__(self, k: int, signal):
        return self.payload(k, signal) if self.active(k) else None


def push_toward(target, u_set: HPolytope):
    """Actuation payload u^a = clip(u + target) - u, i.e. the admissible input nearest u + target."""
    lo, hi = u_set.box_bounds()
    target = np.asarray(target, dtype=float)
    return lambda k, u: np.clip(u + target, lo, hi) - u


def ramp(slope, origin: int):
    slope = np.asarray(slope, dtype=float)
    return lambda k, x: slope * (k - origin)


def constant(vec):
    vec = np.asarray(vec, dtype=float)
    return lambda k, s: vec.copy()


def force_flag(value: bool):
    return lambda k, flag: bool(value)


@dataclass(frozen=True)
class SwitchState:
    emergency: bool = False
    ignore: bool = False


def pending_ignore(s: SwitchState, fam: RoscFamily, x) -> bool:
    """The ignore value step 1 of the switching rule will produce at x."""
    return bool(s.emergency and fam.t0_poly.contains(x))


def switch_policy(s: SwitchState, fam: RoscFamily, x, safety: SafetyVerdict):
    """Returns (new state, use_emergency).

    Step 1: leaving emergency inside T^0 sets ignore for this step.
    Step 2: raise emergency if the safety verdict (computed with that ignore) asks for it.
    Step 3: the caller applies u^e when emergency is set, else the received input.
    """
    emergency = s.emergency
    if emergency and fam.t0_poly.contains(x):
        emergency, ignore = False, True
    else:
        ignore = False
    if safety.emergency_required:
        emergency = True
    return SwitchState(emergency, ignore), emergency


@dataclass
class Scenario:
    name: str
    horizon: int
    x0: np.ndarray
    references: List[Tuple[int, np.ndarray]]
    attacks: List[AttackScript] = field(default_factory=list)

    def reference(self, k: int) -> np.ndarray:
        r = None
        for start, val in self.references:
            if k >= start:
                r = val
        if r is None:
            raise SimError(f"no reference defined at step {k}")
        return np.asarray(r, dtype=float)


@dataclass
class ClosedLoop:
    """Everything a run needs: ground truth plus the synthesized artifacts."""

    plant: PlantModel
    ms: ModelSet
    fam: RoscFamily
    terminal: TerminalController
    tracker: TrackingController
    x_set: HPolytope
    u_set: HPolytope
    w: Zonotope

    @property
    def x_eta(self) -> HPolytope:
        return self.fam.outer_poly()


LOG_FIELDS = ("x_true", "x_received", "u_net", "u_received", "u_applied", "flag", "anomaly",
              "input_admissible", "one_step_safe", "emergency", "ignore", "j_index",
              "controller_tag")


@dataclass
class SimLog:
    n: int
    m: int
    scenario: str = ""
    seed: int = 0
    k: List[int] = field(default_factory=list)
    x_true: List[np.ndarray] = field(default_factory=list)
    x_received: List[np.ndarray] = field(default_factory=list)
    u_net: List[np.ndarray] = field(default_factory=list)
    u_received: List[np.ndarray] = field(default_factory=list)
    u_applied: List[np.ndarray] = field(default_factory=list)
    flag: List[bool] = field(default_factory=list)
    anomaly: List[bool] = field(default_factory=list)
    input_admissible: List[bool] = field(default_factory=list)
    one_step_safe: List[bool] = field(default_factory=list)
    emergency: List[bool] = field(default_factory=list)
    ignore: List[bool] = field(default_factory=list)
    j_index: List[int] = field(default_factory=list)
    controller_tag: List[str] = field(default_factory=list)
    x_final: Optional[np.ndarray] = None
    failure: Optional[str] = None

    def __len__(self):
        return len(self.k)

    @property
    def ok(self) -> bool:
        return self.failure is None

    def array(self, name: str) -> np.ndarray:
        return np.array(getattr(self, name))

    def states(self) -> np.ndarray:
        """x_0..x_K (the last row is the state after the final step)."""
        rows = list(self.x_true)
        if self.x_final is not None:
            rows.append(self.x_final)
        return np.array(rows).reshape(-1, self.n)


def run_scenario(loop: ClosedLoop, sc: Scenario, seed: Optional[int] = None) -> SimLog:
    """Run the closed loop for sc.horizon steps.

    Per step: (1) the controller receives x' = x + x^a, computes u and tests
    the previous transition (x'_{k-1}, u_{k-1}) -> x'_k; (2) the channel
    delivers u' = u + u^a and the (possibly overridden) flag; (3) the plant
    checks safety, switches and applies u^p; (4) everything is logged.
    A state outside X ends the run with a failure record.
    """
    plant = loop.plant if seed is None else PlantModel(loop.plant.A, loop.plant.B, loop.plant.w,
                                                       seed, loop.plant.mode)
    n, m = loop.ms.n, loop.ms.m
    log = SimLog(n, m, sc.name, plant.seed)
    by_channel = {c: [a for a in sc.attacks if a.channel == c] for c in CHANNELS}
    x_eta = loop.x_eta
    x = np.asarray(sc.x0, dtype=float).copy()
    if not loop.x_set.contains(x):
        raise SimError("initial state violates the state constraints")
    state = SwitchState()
    prev_xr = prev_u = None
    u_applied_prev = None
    for k in range(sc.horizon):
        # (1) controller side
        xr = x.copy()
        for a in by_channel["measurement"]:
            inj = a(k, xr)
            if inj is not None:
                xr = xr + inj
        r = sc.reference(k)
        u = loop.tracker(xr, r)
        anomaly = False
        if prev_xr is not None:
            anomaly = detect(loop.ms, prev_xr, prev_u, xr, loop.w).anomaly
        flag = anomaly
        # (2) actuation channel
        ur = u.copy()
        for a in by_channel["actuation"]:
            inj = a(k, ur)
            if inj is not None:
                ur = ur + inj
        for a in by_channel["flag"]:
            forced = a(k, flag)
            if forced is not None:
                flag = bool(forced)
        # (3) plant side
        ignore = pending_ignore(state, loop.fam, x)
        safety = verify_safety(loop.ms, x, ur, loop.u_set, x_eta, loop.w, flag, ignore)
        state, use_emergency = switch_policy(state, loop.fam, x, safety)
        j = membership_index(loop.fam, x)
        if use_emergency:
            try:
                up, j = control(loop.fam, loop.terminal, x, u_applied_prev, j)
            except ControlError as exc:
                log.failure = f"step {k}: {exc}"
                break
            tag = "emergency"
        else:
            up = ur
            tag = "network"
        # (4) log
        log.k.append(k)
        log.x_true.append(x.copy())
        log.x_received.append(xr)
        log.u_net.append(u)
        log.u_received.append(ur)
        log.u_applied.append(np.asarray(up, dtype=float))
        log.flag.append(bool(flag))
        log.anomaly.append(bool(anomaly))
        log.input_admissible.append(safety.input_admissible)
        log.one_step_safe.append(safety.one_step_safe)
        log.emergency.append(state.emergency)
        log.ignore.append(state.ignore)
        log.j_index.append(-1 if j is None else int(j))
        log.controller_tag.append(tag)
        if not loop.u_set.contains(up):
            log.failure = f"step {k}: applied input {up} violates the input constraints"
            break
        x = step_plant(plant, x, up, k)
        prev_xr, prev_u, u_applied_prev = xr, u, up
        if not loop.x_set.contains(x):
            log.x_final = x
            log.failure = f"step {k + 1}: state {x} violates the state constraints"
            break
    else:
        log.x_final = x
    return log

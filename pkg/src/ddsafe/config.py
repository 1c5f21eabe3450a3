"""Scenario configuration: one JSON file fully determines a run."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .setops import HPolytope, Zonotope
from .sim import (AttackScript, PlantModel, Scenario, constant, force_flag, push_toward, ramp)

ATTACK_KINDS = {"push_toward": "actuation", "ramp": None, "constant": None, "force": "flag"}


class ConfigError(ValueError):
    def __init__(self, msg: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line else msg)


@dataclass
class DataSpec:
    n_trajectories: int
    n_samples: int
    amplitude: float
    seed: int


@dataclass
class SynthSpec:
    levels: int = 40
    vertex_budget: int = 10
    max_vertex_bits: int = 10
    rci_margin: float = 0.05
    rci_eps: float = 1e-6
    rci_order: int = 8
    template_angles: int = 12
    terminal_Q: Any = 1.0
    terminal_R: Any = 1.0


@dataclass
class ScenarioConfig:
    A: np.ndarray
    B: np.ndarray
    x_lower: np.ndarray
    x_upper: np.ndarray
    u_lower: np.ndarray
    u_upper: np.ndarray
    w_center: np.ndarray
    w_generators: np.ndarray
    data: DataSpec
    synth: SynthSpec
    tracking_Q: Any
    tracking_R: Any
    x0: np.ndarray
    references: List[Tuple[int, np.ndarray]]
    horizon: int
    seed: int
    scenarios: Dict[str, list]
    disturbance_mode: str = "uniform"
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def x_set(self) -> HPolytope:
        return HPolytope.from_box(self.x_lower, self.x_upper)

    def u_set(self) -> HPolytope:
        return HPolytope.from_box(self.u_lower, self.u_upper)

    def w(self) -> Zonotope:
        return Zonotope(self.w_center, self.w_generators)

    def plant(self, seed: Optional[int] = None) -> PlantModel:
        return PlantModel(self.A, self.B, self.w(), self.seed if seed is None else seed,
                          self.disturbance_mode)

    def weight(self, value, size: int) -> np.ndarray:
        W = np.asarray(value, dtype=float)
        return W * np.eye(size) if W.ndim == 0 else W

    def scenario(self, name: str) -> Scenario:
        if name not in self.scenarios:
            raise ConfigError(f"unknown scenario {name!r}; available: {', '.join(sorted(self.scenarios))}")
        attacks = [self._attack(a) for a in self.scenarios[name]]
        return Scenario(name, self.horizon, self.x0.copy(), list(self.references), attacks)

    def _attack(self, a: dict) -> AttackScript:
        kind, val = a["kind"], a.get("value")
        if kind == "push_toward":
            payload = push_toward(val, self.u_set())
        elif kind == "ramp":
            payload = ramp(val, a.get("origin", a["window"][0]))
        elif kind == "constant":
            payload = constant(val)
        else:
            payload = force_flag(val)
        return AttackScript(a["channel"], tuple(a["window"]), payload)


# ---------------------------------------------------------------------------
# loading and validation

def _line_of(text: str, path: List) -> Optional[int]:
    """Best-effort line number of the value at `path` (keys and list indices)."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            mt = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
            if mt is None:
                break
            pos = mt.end()
    return text.count("\n", 0, pos) + 1


class _Checker:
    def __init__(self, text: str):
        self.text = text

    def fail(self, path, msg):
        where = ".".join(str(p) for p in path)
        raise ConfigError(f"{where}: {msg}", _line_of(self.text, list(path)))

    def get(self, obj, path, key, default=KeyError):
        if not isinstance(obj, dict):
            self.fail(path, "expected an object")
        if key not in obj:
            if default is KeyError:
                self.fail(list(path) + [key], "missing")
            return default
        return obj[key]

    def matrix(self, v, path, shape=None):
        try:
            M = np.array(v, dtype=float)
        except (TypeError, ValueError):
            self.fail(path, "expected a numeric matrix")
        if M.ndim != 2:
            self.fail(path, "expected a matrix (list of rows)")
        if not np.all(np.isfinite(M)):
            self.fail(path, "non-finite entry")
        if shape is not None and M.shape != shape:
            self.fail(path, f"expected shape {shape}, got {M.shape}")
        return M

    def vector(self, v, path, size=None):
        try:
            x = np.array(v, dtype=float)
        except (TypeError, ValueError):
            self.fail(path, "expected a numeric vector")
        if x.ndim != 1:
            self.fail(path, "expected a flat list of numbers")
        if not np.all(np.isfinite(x)):
            self.fail(path, "non-finite entry")
        if size is not None and x.size != size:
            self.fail(path, f"expected {size} entries, got {x.size}")
        return x

    def integer(self, v, path, lo=None):
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(path, "expected an integer")
        if lo is not None and v < lo:
            self.fail(path, f"must be >= {lo}")
        return v

    def number(self, v, path, lo=None, strict=False):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            self.fail(path, "expected a finite number")
        if lo is not None and (v <= lo if strict else v < lo):
            self.fail(path, f"must be {'>' if strict else '>='} {lo}")
        return float(v)

    def weight(self, v, path, size):
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            if v <= 0:
                self.fail(path, "weight must be positive")
            return float(v)
        W = self.matrix(v, path, (size, size))
        if not np.allclose(W, W.T) or np.linalg.eigvalsh((W + W.T) / 2).min() < 0:
            self.fail(path, "weight matrix must be symmetric positive semidefinite")
        return W


def parse_config(text: str) -> ScenarioConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
    ck = _Checker(text)
    if not isinstance(raw, dict):
        ck.fail([], "top level must be an object")
    plant = ck.get(raw, [], "plant")
    A = ck.matrix(ck.get(plant, ["plant"], "A"), ["plant", "A"])
    n = A.shape[0]
    if A.shape != (n, n):
        ck.fail(["plant", "A"], f"must be square, got {A.shape}")
    B = ck.matrix(ck.get(plant, ["plant"], "B"), ["plant", "B"])
    if B.shape[0] != n:
        ck.fail(["plant", "B"], f"must have {n} rows (state size), got {B.shape[0]}")
    m = B.shape[1]
    mode = ck.get(plant, ["plant"], "disturbance_mode", "uniform")
    if mode not in ("uniform", "vertex"):
        ck.fail(["plant", "disturbance_mode"], "must be 'uniform' or 'vertex'")

    def box(key, size):
        b = ck.get(raw, [], key)
        lo = ck.vector(ck.get(b, [key], "lower"), [key, "lower"], size)
        hi = ck.vector(ck.get(b, [key], "upper"), [key, "upper"], size)
        if np.any(lo >= hi):
            ck.fail([key], "every lower bound must be below its upper bound")
        return lo, hi

    xl, xu = box("state_box", n)
    ul, uu = box("input_box", m)
    dist = ck.get(raw, [], "disturbance")
    wc = ck.vector(ck.get(dist, ["disturbance"], "center"), ["disturbance", "center"], n)
    wg = ck.matrix(ck.get(dist, ["disturbance"], "generators"), ["disturbance", "generators"])
    if wg.shape[0] != n:
        ck.fail(["disturbance", "generators"], f"must have {n} rows, got {wg.shape[0]}")

    d = ck.get(raw, [], "data")
    data = DataSpec(
        ck.integer(ck.get(d, ["data"], "n_trajectories"), ["data", "n_trajectories"], 1),
        ck.integer(ck.get(d, ["data"], "n_samples"), ["data", "n_samples"], 1),
        ck.number(ck.get(d, ["data"], "amplitude"), ["data", "amplitude"], 0.0),
        ck.integer(ck.get(d, ["data"], "seed"), ["data", "seed"], 0),
    )
    if data.amplitude > 1.0:
        ck.fail(["data", "amplitude"], "must be at most 1 (fraction of the input box)")

    s = ck.get(raw, [], "synthesis", {})
    p = ["synthesis"]
    synth = SynthSpec(
        levels=ck.integer(s.get("levels", 40), p + ["levels"], 0),
        vertex_budget=ck.integer(s.get("vertex_budget", 10), p + ["vertex_budget"], 1),
        max_vertex_bits=ck.integer(s.get("max_vertex_bits", 10), p + ["max_vertex_bits"], 0),
        rci_margin=ck.number(s.get("rci_margin", 0.05), p + ["rci_margin"], 0.0),
        rci_eps=ck.number(s.get("rci_eps", 1e-6), p + ["rci_eps"], 0.0, strict=True),
        rci_order=ck.integer(s.get("rci_order", 8), p + ["rci_order"], n),
        template_angles=ck.integer(s.get("template_angles", 12), p + ["template_angles"], 2),
        terminal_Q=ck.weight(s.get("terminal_Q", 1.0), p + ["terminal_Q"], n),
        terminal_R=ck.weight(s.get("terminal_R", 1.0), p + ["terminal_R"], m),
    )
    if synth.vertex_budget > synth.max_vertex_bits:
        ck.fail(p + ["vertex_budget"], "exceeds max_vertex_bits")

    t = ck.get(raw, [], "tracking", {})
    tq = ck.weight(t.get("Q", 1.0), ["tracking", "Q"], n)
    tr = ck.weight(t.get("R", 1.0), ["tracking", "R"], m)
    x0 = ck.vector(ck.get(raw, [], "x0"), ["x0"], n)
    if np.any(x0 < xl) or np.any(x0 > xu):
        ck.fail(["x0"], "initial state lies outside the state box")
    refs = []
    rl = ck.get(raw, [], "references")
    if not isinstance(rl, list) or not rl:
        ck.fail(["references"], "expected a nonempty list")
    for i, e in enumerate(rl):
        start = ck.integer(ck.get(e, ["references", i], "from"), ["references", "from"], 0)
        refs.append((start, ck.vector(ck.get(e, ["references", i], "r"), ["references", "r"], n)))
    if refs[0][0] != 0:
        ck.fail(["references"], "the first reference must start at step 0")
    if any(b[0] <= a[0] for a, b in zip(refs, refs[1:])):
        ck.fail(["references"], "reference start steps must increase")
    horizon = ck.integer(ck.get(raw, [], "horizon"), ["horizon"], 1)
    seed = ck.integer(ck.get(raw, [], "seed", 0), ["seed"], 0)

    scen = ck.get(raw, [], "scenarios", {"nominal": []})
    if not isinstance(scen, dict):
        ck.fail(["scenarios"], "expected an object of attack lists")
    sizes = {"actuation": m, "measurement": n}
    for name, attacks in scen.items():
        path = ["scenarios", name]
        if not isinstance(attacks, list):
            ck.fail(path, "expected a list of attacks")
        for a in attacks:
            ch = ck.get(a, path, "channel")
            if ch not in ("actuation", "measurement", "flag"):
                ck.fail(path + ["channel"], f"unknown channel {ch!r}")
            kind = ck.get(a, path, "kind")
            if kind not in ATTACK_KINDS:
                ck.fail(path + ["kind"], f"unknown kind {kind!r}")
            need = ATTACK_KINDS[kind]
            if need is not None and ch != need:
                ck.fail(path + ["kind"], f"{kind!r} only applies to the {need} channel")
            if ch == "flag" and kind != "force":
                ck.fail(path + ["kind"], "the flag channel only supports 'force'")
            win = ck.get(a, path, "window")
            if (not isinstance(win, list) or len(win) != 2
                    or not all(isinstance(v, int) and not isinstance(v, bool) for v in win)
                    or win[0] > win[1] or win[0] < 0):
                ck.fail(path + ["window"], "expected [start, end] with 0 <= start <= end")
            val = ck.get(a, path, "value")
            if ch == "flag":
                if not isinstance(val, bool):
                    ck.fail(path + ["value"], "flag override must be true or false")
            else:
                ck.vector(val, path + ["value"], sizes[ch])
            if "origin" in a:
                ck.integer(a["origin"], path + ["origin"])
    return ScenarioConfig(A, B, xl, xu, ul, uu, wc, wg, data, synth, tq, tr, x0, refs, horizon,
                          seed, scen, mode, raw)


def load_config(path=None) -> ScenarioConfig:
    """Load a config file; without a path, the shipped two-tank config."""
    if path is None:
        text = resources.files("ddsafe").joinpath("data/two_tank.json").read_text()
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)


def default_config_text() -> str:
    return resources.files("ddsafe").joinpath("data/two_tank.json").read_text()

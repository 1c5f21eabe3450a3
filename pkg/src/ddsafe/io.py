"""File formats: trajectory CSV, model-set and family JSON, simulation logs, set geometry."""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path
from typing import Union

import numpy as np

from .datamodel import ModelSet, TrajectorySet
from .setops import HPolytope, MatrixZonotope, VertexModelSet, Zonotope, hpolytope_vertices_2d
from .sim import LOG_FIELDS, SimLog
from .stc import RoscFamily, RoscLevel, TerminalController

PathLike = Union[str, Path]
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def fmt(v: float) -> str:
    """Shortest text that round-trips the double exactly (at most 17 significant digits)."""
    return repr(float(v))


def _list(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _arr(obj, key, shape=None) -> np.ndarray:
    if key not in obj:
        raise FormatError(f"missing field {key!r}")
    try:
        a = np.asarray(obj[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"field {key!r} is not numeric: {exc}") from None
    if shape is not None:
        if a.size == 0 and 0 in shape:
            return a.reshape(shape)
        if a.shape != tuple(shape):
            raise FormatError(f"field {key!r} has shape {a.shape}, expected {tuple(shape)}")
    return a


def _int(obj, key) -> int:
    v = obj.get(key)
    if not isinstance(v, int) or isinstance(v, bool) or v < 0:
        raise FormatError(f"field {key!r} must be a nonnegative integer")
    return v


def _dump(obj, path: PathLike):
    # json writes floats with repr, which is exact for doubles
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def _load(path: PathLike) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: expected a JSON object")
    return obj


# ---------------------------------------------------------------------------
# trajectories


def trajectory_csv(U, X) -> str:
    """Header u_1..u_m,x_1..x_n; one row per sample, the last row has empty inputs."""
    U = np.atleast_2d(U)
    X = np.atleast_2d(X)
    m, n = U.shape[0], X.shape[0]
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([f"u_{i + 1}" for i in range(m)] + [f"x_{i + 1}" for i in range(n)])
    for k in range(X.shape[1]):
        u = [fmt(v) for v in U[:, k]] if k < U.shape[1] else [""] * m
        w.writerow(u + [fmt(v) for v in X[:, k]])
    return out.getvalue()


def parse_trajectory_csv(text: str, name: str = "<trajectory>"):
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows:
        raise FormatError(f"{name}: empty file")
    head = [h.strip() for h in rows[0]]
    m = sum(h.startswith("u_") for h in head)
    n = sum(h.startswith("x_") for h in head)
    expected = [f"u_{i + 1}" for i in range(m)] + [f"x_{i + 1}" for i in range(n)]
    if head != expected or n == 0 or m == 0:
        raise FormatError(f"{name}: line 1: header must be u_1..u_m,x_1..x_n")
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    if len(body) < 2:
        raise FormatError(f"{name}: need at least one input sample and its successor")
    U, X = [], []
    for i, r in enumerate(body):
        line = i + 2
        if len(r) != n + m:
            raise FormatError(f"{name}: line {line}: expected {n + m} fields, got {len(r)}")
        last = i == len(body) - 1
        try:
            X.append([float(c) for c in r[m:]])
            if last:
                if any(c.strip() for c in r[:m]):
                    raise FormatError(f"{name}: line {line}: the last row must have empty inputs")
            else:
                U.append([float(c) for c in r[:m]])
        except ValueError as exc:
            raise FormatError(f"{name}: line {line}: {exc}") from None
    return np.array(U).T, np.array(X).T


def write_trajectories(data: TrajectorySet, out_dir: PathLike) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (U, X) in enumerate(data.trajectories):
        p = out / f"traj_{i:03d}.csv"
        p.write_text(trajectory_csv(U, X))
        paths.append(p)
    return paths


def read_trajectories(paths) -> TrajectorySet:
    paths = list(paths)
    if not paths:
        raise FormatError("no trajectory files")
    trajs = []
    for p in paths:
        trajs.append(parse_trajectory_csv(Path(p).read_text(), str(p)))
    return TrajectorySet(trajs)


# ---------------------------------------------------------------------------
# model set


def model_set_to_dict(ms: ModelSet) -> dict:
    d = {"format": FORMAT_VERSION, "kind": "model_set", "n": ms.n, "m": ms.m,
         "center": _list(ms.mz.center), "generators": _list(ms.mz.generators)}
    if ms.reduced is not None:
        d["reduced"] = {"center": _list(ms.reduced.center),
                        "generators": _list(ms.reduced.generators)}
    if ms.vertices is not None:
        d["vertices"] = {"A": _list(ms.vertices.A), "B": _list(ms.vertices.B)}
    return d


def model_set_from_dict(d: dict) -> ModelSet:
    if d.get("kind") != "model_set":
        raise FormatError("not a model-set document")
    n, m = _int(d, "n"), _int(d, "m")
    C = _arr(d, "center", (n, n + m))
    G = _arr(d, "generators")
    G = G.reshape((-1, n, n + m)) if G.size else None
    red = verts = None
    if "reduced" in d:
        r = d["reduced"]
        RG = _arr(r, "generators")
        red = MatrixZonotope(_arr(r, "center", (n, n + m)), RG.reshape((-1, n, n + m)) if RG.size else None)
    if "vertices" in d:
        v = d["vertices"]
        A = _arr(v, "A")
        B = _arr(v, "B")
        try:
            verts = VertexModelSet(A.reshape(-1, n, n), B.reshape(-1, n, m))
        except ValueError as exc:
            raise FormatError(f"vertex models: {exc}") from None
    try:
        return ModelSet(MatrixZonotope(C, G), n, m, red, verts)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def save_model_set(ms: ModelSet, path: PathLike):
    _dump(model_set_to_dict(ms), path)


def load_model_set(path: PathLike) -> ModelSet:
    return model_set_from_dict(_load(path))


# ---------------------------------------------------------------------------
# ROSC family


def _zono(z: Zonotope) -> dict:
    return {"center": _list(z.center), "generators": _list(z.generators)}


def _zono_from(d: dict, dim: int) -> Zonotope:
    c = _arr(d, "center", (dim,))
    G = _arr(d, "generators")
    return Zonotope(c, G.reshape(dim, -1))


def family_to_dict(fam: RoscFamily) -> dict:
    d = {"format": FORMAT_VERSION, "kind": "rosc_family", "n": fam.n, "m": fam.m, "N": fam.N,
         "t0": dict(_zono(fam.t0), H=_list(fam.t0_poly.H), h=_list(fam.t0_poly.h))}
    if fam.terminal is not None:
        d["terminal"] = {"gain": _list(fam.terminal.gain), "offset": _list(fam.terminal.offset)}
    levels = []
    for lv in fam.levels:
        e = {"xi_center": _list(lv.xi.center), "xi_generators": _list(lv.xi.generators),
             "tx_center": _list(lv.tx.center), "tx_generators": _list(lv.tx.generators),
             "tx_H": _list(lv.tx_poly.H), "tx_h": _list(lv.tx_poly.h)}
        if lv.xi_poly is not None:
            e["xi_H"] = _list(lv.xi_poly.H)
            e["xi_h"] = _list(lv.xi_poly.h)
        levels.append(e)
    d["levels"] = levels
    return d


def _poly(H, h, dim, what) -> HPolytope:
    H = np.asarray(H, dtype=float).reshape(-1, dim)
    h = np.asarray(h, dtype=float).ravel()
    if H.shape[0] != h.size:
        raise FormatError(f"{what}: {H.shape[0]} normals for {h.size} offsets")
    return HPolytope(H, h)


def family_from_dict(d: dict) -> RoscFamily:
    if d.get("kind") != "rosc_family":
        raise FormatError("not a family document")
    n, m, N = _int(d, "n"), _int(d, "m"), _int(d, "N")
    t0d = d.get("t0")
    if not isinstance(t0d, dict):
        raise FormatError("missing field 't0'")
    t0 = _zono_from(t0d, n)
    t0_poly = _poly(_arr(t0d, "H"), _arr(t0d, "h"), n, "t0")
    term = None
    if "terminal" in d:
        term = TerminalController(_arr(d["terminal"], "gain", (m, n)),
                                  _arr(d["terminal"], "offset", (m,)))
    raw = d.get("levels")
    if not isinstance(raw, list) or len(raw) != N:
        raise FormatError(f"expected {N} levels")
    levels = []
    for j, e in enumerate(raw, start=1):
        try:
            xi = Zonotope(_arr(e, "xi_center", (n + m,)), _arr(e, "xi_generators").reshape(n + m, -1))
            tx = Zonotope(_arr(e, "tx_center", (n,)), _arr(e, "tx_generators").reshape(n, -1))
            tx_poly = _poly(_arr(e, "tx_H"), _arr(e, "tx_h"), n, f"level {j}")
            xi_poly = None
            if "xi_H" in e:
                xi_poly = _poly(_arr(e, "xi_H"), _arr(e, "xi_h"), n + m, f"level {j}")
        except FormatError as exc:
            raise FormatError(f"level {j}: {exc}") from None
        levels.append(RoscLevel(xi, xi_poly, tx, tx_poly))
    return RoscFamily(t0, t0_poly, levels, term)


def save_family(fam: RoscFamily, path: PathLike):
    _dump(family_to_dict(fam), path)


def load_family(path: PathLike) -> RoscFamily:
    return family_from_dict(_load(path))


# ---------------------------------------------------------------------------
# simulation logs


def log_header(n: int, m: int) -> list:
    cols = ["k"]
    for name, size in (("x_true", n), ("x_received", n), ("u_net", m), ("u_received", m),
                       ("u_applied", m)):
        cols += [f"{name}_{i + 1}" for i in range(size)]
    return cols + list(LOG_FIELDS[5:])


def log_csv(log: SimLog) -> str:
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(log_header(log.n, log.m))
    for i, k in enumerate(log.k):
        row = [str(k)]
        for name in LOG_FIELDS[:5]:
            row += [fmt(v) for v in getattr(log, name)[i]]
        for name in ("flag", "anomaly", "input_admissible", "one_step_safe", "emergency", "ignore"):
            row.append(str(int(getattr(log, name)[i])))
        row += [str(log.j_index[i]), log.controller_tag[i]]
        w.writerow(row)
    return out.getvalue()


def log_to_dict(log: SimLog) -> dict:
    d = {"format": FORMAT_VERSION, "kind": "sim_log", "scenario": log.scenario, "seed": log.seed,
         "n": log.n, "m": log.m, "k": list(log.k), "failure": log.failure,
         "x_final": None if log.x_final is None else _list(log.x_final)}
    for name in LOG_FIELDS:
        vals = getattr(log, name)
        if name in LOG_FIELDS[:5]:
            d[name] = [_list(v) for v in vals]
        elif name == "j_index":
            d[name] = [int(v) for v in vals]
        elif name == "controller_tag":
            d[name] = list(vals)
        else:
            d[name] = [bool(v) for v in vals]
    return d


def log_from_dict(d: dict) -> SimLog:
    if d.get("kind") != "sim_log":
        raise FormatError("not a simulation log")
    log = SimLog(_int(d, "n"), _int(d, "m"), d.get("scenario", ""), d.get("seed", 0))
    log.k = list(d["k"])
    for name in LOG_FIELDS:
        vals = d[name]
        if name in LOG_FIELDS[:5]:
            vals = [np.asarray(v, dtype=float) for v in vals]
        setattr(log, name, list(vals))
    log.failure = d.get("failure")
    if d.get("x_final") is not None:
        log.x_final = np.asarray(d["x_final"], dtype=float)
    return log


def write_log(log: SimLog, stem: PathLike):
    """Writes <stem>.csv and <stem>.json."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".csv").write_text(log_csv(log))
    _dump(log_to_dict(log), stem.with_suffix(".json"))


# ---------------------------------------------------------------------------
# set geometry


def sets_csv(fam: RoscFamily) -> str:
    """Vertices of every 2-D state set: columns level,vertex,x_1,x_2 in counter-clockwise order."""
    if fam.n != 2:
        raise FormatError("set geometry export needs a 2-D state")
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["level", "vertex", "x_1", "x_2"])
    for j in range(fam.N + 1):
        V = hpolytope_vertices_2d(fam.state_poly(j))
        for i, v in enumerate(V):
            w.writerow([j, i, fmt(v[0]), fmt(v[1])])
    return out.getvalue()

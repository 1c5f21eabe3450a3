"""Command-line pipeline: collect, identify, synth, run, export-sets.

Exit codes: 0 safe run, 2 safety violation, 3 synthesis failure (rank, certification,
empty level), 4 input or parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, ScenarioConfig, load_config
from .datamodel import DataError, contains_model, rank_ok, stack
from .pipeline import assemble, collect, identify, synthesize
from .setops import SetError, hpolytope_vertices_2d, polygon_area
from .sim import SimError, run_scenario
from .stc import SynthesisError

EXIT_OK, EXIT_UNSAFE, EXIT_SYNTH, EXIT_INPUT = 0, 2, 3, 4

log = logging.getLogger("ddsafe")


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


def _paths(out: Path) -> dict:
    return {"traj": out / "trajectories", "ms": out / "model_set.json", "fam": out / "family.json",
            "runs": out / "runs", "sets": out / "sets"}


def _need(path: Path, what: str):
    if not path.exists():
        raise CliError(f"missing {what}: {path} (run the earlier pipeline step first)", EXIT_INPUT)


def _load_ms(p):
    _need(p["ms"], "model-set file")
    return io.load_model_set(p["ms"])


def _load_fam(p):
    _need(p["fam"], "family file")
    return io.load_family(p["fam"])


def cmd_collect(cfg: ScenarioConfig, out: Path, seed=None) -> int:
    p = _paths(out)
    data = collect(cfg, seed)
    for old in p["traj"].glob("traj_*.csv"):
        old.unlink()
    files = io.write_trajectories(data, p["traj"])
    ok = rank_ok(stack(data))
    print(f"wrote {len(files)} trajectories to {p['traj']}")
    print(f"rank condition: {'OK' if ok else 'FAILED'}")
    if not ok:
        raise CliError("data are not rich enough; raise n_samples or amplitude", EXIT_SYNTH)
    return EXIT_OK


def cmd_identify(cfg: ScenarioConfig, out: Path) -> int:
    p = _paths(out)
    files = sorted(p["traj"].glob("traj_*.csv"))
    if not files:
        raise CliError(f"no trajectory files in {p['traj']}", EXIT_INPUT)
    data = io.read_trajectories(files)
    if (data.n, data.m) != (cfg.n, cfg.m):
        raise CliError(f"trajectories have n={data.n}, m={data.m}; config expects "
                       f"n={cfg.n}, m={cfg.m}", EXIT_INPUT)
    d = stack(data)
    if not rank_ok(d):
        raise CliError("data fail the rank condition; raise n_samples or amplitude", EXIT_SYNTH)
    ms = identify(cfg, data)
    io.save_model_set(ms, p["ms"])
    G = ms.mz.generators
    report = {"samples": d.T, "generators": int(ms.mz.n_generators),
              "max_generator_norm": float(max((np.linalg.norm(g, 2) for g in G), default=0.0)),
              "vertex_models": len(ms.vertices),
              "contains_true_model": bool(contains_model(ms, cfg.A, cfg.B))}
    (out / "identify_report.json").write_text(json.dumps(report, indent=1) + "\n")
    for k, v in report.items():
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_synth(cfg: ScenarioConfig, out: Path) -> int:
    p = _paths(out)
    ms = _load_ms(p)
    if ms.vertices is None:
        ms = ms.with_vertices(cfg.synth.vertex_budget, cfg.synth.max_vertex_bits)
    try:
        _, fam = synthesize(cfg, ms)
    except SynthesisError as exc:
        raise CliError(f"synthesis failed: {exc}", EXIT_SYNTH) from None
    io.save_family(fam, p["fam"])
    print(f"wrote {fam.N} levels to {p['fam']}")
    if fam.n == 2:
        for j in range(fam.N + 1):
            area = polygon_area(hpolytope_vertices_2d(fam.state_poly(j)))
            print(f"level {j:3d}  area {area:.6g}")
    return EXIT_OK


def _run_one(args):
    cfg, ms, fam, name, seed, runs = args
    loop = assemble(cfg, ms, fam)
    sim_log = run_scenario(loop, cfg.scenario(name), seed=seed)
    io.write_log(sim_log, runs / f"{name}_seed{seed}")
    return seed, sim_log.failure, int(np.sum(sim_log.array("anomaly"))), \
        int(np.sum(sim_log.array("emergency")))


def cmd_run(cfg: ScenarioConfig, out: Path, scenario: str, seed=None, sweep=None) -> int:
    p = _paths(out)
    ms, fam = _load_ms(p), _load_fam(p)
    if fam.terminal is None:
        raise CliError("family file carries no terminal controller", EXIT_INPUT)
    if scenario not in cfg.scenarios:
        raise CliError(f"unknown scenario {scenario!r}; known: {', '.join(cfg.scenarios)}",
                       EXIT_INPUT)
    base = cfg.seed if seed is None else seed
    seeds = [base] if not sweep else list(range(base, base + sweep))
    jobs = [(cfg, ms, fam, scenario, s, p["runs"]) for s in seeds]
    if len(jobs) > 1:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(jobs[0])]
    if fam.n == 2:
        p["sets"].mkdir(parents=True, exist_ok=True)
        (p["sets"] / "levels.csv").write_text(io.sets_csv(fam))
    code = EXIT_OK
    for s, failure, n_anom, n_emerg in results:
        status = "violation: " + failure if failure else "safe"
        print(f"{scenario} seed {s}: {status}; anomalies {n_anom}, emergency steps {n_emerg}")
        if failure:
            code = EXIT_UNSAFE
    return code


def cmd_export_sets(cfg: ScenarioConfig, out: Path) -> int:
    p = _paths(out)
    fam = _load_fam(p)
    if fam.n != 2:
        raise CliError("set geometry export needs a 2-D state", EXIT_INPUT)
    p["sets"].mkdir(parents=True, exist_ok=True)
    path = p["sets"] / "levels.csv"
    path.write_text(io.sets_csv(fam))
    print(f"wrote {fam.N + 1} set outlines to {path}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the input-error code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ddsafe", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("collect", "identify", "synth", "run", "export-sets"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="config JSON (default: shipped two-tank config)")
        sp.add_argument("--out", default="out", help="artifact directory (default: out)")
        sp.add_argument("--verbose", action="store_true")
        if name in ("collect", "run"):
            sp.add_argument("--seed", type=int, help="override the config seed")
        if name == "run":
            sp.add_argument("--scenario", default="nominal")
            sp.add_argument("--sweep", type=int, help="run this many consecutive seeds in parallel")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "collect":
            return cmd_collect(cfg, out, args.seed)
        if args.command == "identify":
            return cmd_identify(cfg, out)
        if args.command == "synth":
            return cmd_synth(cfg, out)
        if args.command == "run":
            if args.sweep is not None and args.sweep < 1:
                raise CliError("--sweep needs a positive count", EXIT_INPUT)
            return cmd_run(cfg, out, args.scenario, args.seed, args.sweep)
        return cmd_export_sets(cfg, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (io.FormatError, DataError, SetError, SimError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

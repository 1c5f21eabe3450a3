"""Acceptance suite: ten criteria, each printing one PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the lines as they happen;
they are also repeated in the terminal summary.
"""

import itertools
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from conftest import record
from ddsafe.datamodel import build_model_set, contains_model, rank_ok, stack
from ddsafe.pipeline import collect
from ddsafe.reach import reach_one_step
from ddsafe.setops import HPolytope, Zonotope, contains_point, support, zonotope_in_hpolytope
from ddsafe.sim import run_scenario
from ddsafe.stc import certify_rci, control

WINDOW = (95, 113)


_WORKER = {}


def _init_worker(loop, cfg):
    _WORKER["loop"], _WORKER["cfg"] = loop, cfg


def _pool_runs(loop, cfg, name, seeds):
    # the closed loop is shipped to each worker once, not per run
    with ProcessPoolExecutor(initializer=_init_worker, initargs=(loop, cfg)) as pool:
        return list(pool.map(_run, [(name, s) for s in seeds]))


def _run(args):
    name, seed = args
    return run_scenario(_WORKER["loop"], _WORKER["cfg"].scenario(name), seed=seed)


# ---------------------------------------------------------------------------
# 1. model-set soundness


def test_c01_model_set_soundness(cfg):
    t = time.perf_counter()
    hits = 0
    for seed in range(50):
        d = stack(collect(cfg, seed=1000 + seed))
        assert rank_ok(d)
        hits += contains_model(build_model_set(d, cfg.w()), cfg.A, cfg.B)
    dt = time.perf_counter() - t
    ok = hits == 50 and dt < 10
    record(1, ok, f"true model contained in {hits}/50 model sets, {dt:.1f} s (< 10 s)")
    assert ok


# ---------------------------------------------------------------------------
# 2. reachability soundness


def _inside_2d(C, G, X, tol=1e-12):
    """Exact batch membership of X[:, s] in the 2-D zonotope (C[:, s], G[:, :, s]).

    Facet normals of a 2-D zonotope are perpendicular to its generators, so
    testing every distinct generator direction (over the whole batch) is exact.
    """
    g = G.transpose(1, 0, 2).reshape(2, -1)
    g = g[:, np.linalg.norm(g, axis=0) > 1e-15]
    ang = np.mod(np.arctan2(g[1], g[0]), np.pi)
    ang = np.unique(np.round(ang, 9))
    normals = np.stack([-np.sin(ang), np.cos(ang)])
    ok = np.ones(X.shape[1], dtype=bool)
    for nv in normals.T:
        reach = np.abs(np.einsum("i,gis->gs", nv, G)).sum(axis=0)
        off = np.abs(nv @ (X - C))
        ok &= off <= reach + tol * (1.0 + reach)
    return ok


def test_c02_reach_soundness(cfg):
    t = time.perf_counter()
    rng = np.random.default_rng(2)
    w = cfg.w()
    xl, xu, ul, uu = cfg.x_lower, cfg.x_upper, cfg.u_lower, cfg.u_upper
    n_in, worst = 0, np.inf
    total = 0
    for run in range(10):
        ms = build_model_set(stack(collect(cfg, seed=2000 + run)), w)
        S = 10_000
        Z = np.vstack([rng.uniform(xl[:, None], xu[:, None], (2, S)),
                       rng.uniform(ul[:, None], uu[:, None], (3, S))])
        Wd = w.center[:, None] + w.generators @ rng.uniform(-1, 1, (w.n_generators, S))
        # half the draws use the true plant, half a random member of the model set
        half = S // 2
        succ = np.empty((2, S))
        AB = np.hstack([cfg.A, cfg.B])
        succ[:, :half] = AB @ Z[:, :half] + Wd[:, :half]
        beta = rng.uniform(-1, 1, (ms.mz.n_generators, S - half))
        M = ms.mz.center[None] + np.einsum("gs,gij->sij", beta, ms.mz.generators)
        succ[:, half:] = np.einsum("sij,js->is", M, Z[:, half:]) + Wd[:, half:]
        C = ms.mz.center @ Z + w.center[:, None]
        G = np.einsum("gij,js->gis", ms.mz.generators, Z)
        G = np.concatenate([G, np.repeat(w.generators.T[:, :, None], S, axis=2)])
        n_in += int(_inside_2d(C, G, succ).sum())
        total += S
        # support domination against vertex models of the full set
        ang = np.linspace(0, 2 * np.pi, 16, endpoint=False)
        D = np.vstack([np.cos(ang), np.sin(ang)])
        for s in range(20):
            z = Z[:, s]
            R = reach_one_step(ms, z[:2], z[2:], w)
            gz = ms.mz.generators @ z
            pool = [np.sign(gz @ d) for d in D.T]
            pool += list(rng.choice([-1.0, 1.0], size=(50, ms.mz.n_generators)))
            for d in D.T:
                oracle = max(d @ (ms.mz.center @ z + b @ gz) for b in pool) + support(w, d)
                worst = min(worst, support(R, d) - oracle)
    dt = time.perf_counter() - t
    ok = n_in == total and worst >= -1e-9 and dt < 30
    record(2, ok, f"{n_in}/{total} successors inside, min support slack {worst:.2e} "
                  f"(>= -1e-9), {dt:.1f} s (< 30 s)")
    assert ok


# ---------------------------------------------------------------------------
# 3. no false positives


def test_c03_no_false_positives(cfg, art):
    t = time.perf_counter()
    logs = _pool_runs(art.loop, cfg, "nominal", range(50))
    dt = time.perf_counter() - t
    n_anom = sum(int(np.sum(lg.array("anomaly"))) for lg in logs)
    full = all(len(lg) == 200 and lg.ok for lg in logs)
    ok = n_anom == 0 and full and dt < 20
    record(3, ok, f"{n_anom} anomalies over 50 attack-free 200-step runs, {dt:.1f} s (< 20 s)")
    assert ok


# ---------------------------------------------------------------------------
# 4. RCI certification


def test_c04_rci_certification(cfg, art):
    t = time.perf_counter()
    fam, vs = art.fam, art.ms.vertices
    good = certify_rci(vs, fam.terminal, fam.t0, cfg.u_set(), cfg.w(), cfg.x_set())
    w2 = Zonotope(cfg.w().center, 2 * cfg.w().generators)
    bad = certify_rci(vs, fam.terminal, fam.t0, cfg.u_set(), w2, cfg.x_set())
    dt = time.perf_counter() - t
    ok = good and not bad and dt < 5
    record(4, ok, f"certified {good}, with doubled W {bad} (expected False), {dt:.2f} s (< 5 s)")
    assert ok


# ---------------------------------------------------------------------------
# 5. ROSC correctness


def test_c05_rosc_correctness(cfg, art):
    t = time.perf_counter()
    fam, vs, w = art.fam, art.ms.vertices, cfg.w()
    rng = np.random.default_rng(5)
    wv = np.array([w.center + w.generators @ np.array(s)
                   for s in itertools.product([-1.0, 1.0], repeat=w.n_generators)])
    failures, worst, checked = 0, -np.inf, 0
    for j in range(1, fam.N + 1):
        tx = fam.state_set(j)
        target = fam.state_poly(j - 1)
        beta = rng.uniform(-1, 1, (100, tx.n_generators))
        beta[:10] = np.sign(beta[:10])  # include some vertices
        for x in tx.center + beta @ tx.generators.T:
            try:
                u, _ = control(fam, fam.terminal, x, j=j)
            except Exception:
                failures += 1
                continue
            nxt = np.einsum("kij,j->ki", vs.A, x) + np.einsum("kij,j->ki", vs.B, u)
            pts = (nxt[:, None, :] + wv[None]).reshape(-1, x.size)
            slack = (pts @ target.H.T - target.h).max()
            worst = max(worst, slack)
            failures += int(slack > 1e-7 or not cfg.u_set().contains(u))
            checked += 1
    dt = time.perf_counter() - t
    ok = failures == 0 and dt < 300
    record(5, ok, f"{checked} states over {fam.N} levels x {len(vs)} vertex models x {len(wv)} "
                  f"disturbance vertices, {failures} failures, worst slack {worst:.1e} "
                  f"(<= 1e-7), {dt:.0f} s (< 300 s)")
    assert ok


# ---------------------------------------------------------------------------
# 6. contractiveness


def test_c06_contractiveness(cfg, art):
    t = time.perf_counter()
    fam, w = art.fam, cfg.w()
    rng = np.random.default_rng(6)
    wv = np.array([w.center + w.generators @ np.array(s)
                   for s in itertools.product([-1.0, 1.0], repeat=w.n_generators)])
    t0 = fam.state_poly(0)
    bad = 0
    for i in range(200):
        j0 = int(rng.integers(1, fam.N + 1))
        tx = fam.state_set(j0)
        x = tx.center + tx.generators @ rng.uniform(-1, 1, tx.n_generators)
        u_prev, reached, left = None, None, False
        for k in range(fam.N + 50):
            u, j = control(fam, fam.terminal, x, u_prev)
            base = cfg.A @ x + cfg.B @ u
            cand = base[None] + wv
            # adversary: the disturbance vertex that ends worst relative to the terminal set
            x = cand[np.argmax((cand @ t0.H.T - t0.h).max(axis=1))]
            u_prev = u
            inside = t0.contains(x)
            if reached is None and inside:
                reached = k + 1
            elif reached is not None and not inside:
                left = True
            if reached is not None and k + 1 >= reached + 50:
                break
        bad += int(reached is None or reached > fam.N or left)
    dt = time.perf_counter() - t
    ok = bad == 0 and dt < 120
    record(6, ok, f"{200 - bad}/200 starts reach T0 within {fam.N} steps and stay 50 more, "
                  f"{dt:.0f} s (< 120 s)")
    assert ok


# ---------------------------------------------------------------------------
# 7. scenario A


def _violations(lg, cfg):
    X = lg.states()
    U = lg.array("u_applied")
    xs, us = cfg.x_set(), cfg.u_set()
    return int((~xs.contains_many(X)).sum() + (~us.contains_many(U)).sum())


def test_c07_scenario_a(cfg, art):
    lg = run_scenario(art.loop, cfg.scenario("attack-actuation"))
    X = lg.states()
    em = lg.array("emergency")
    tag = lg.array("controller_tag")
    r1 = cfg.scenario("attack-actuation").reference(94)
    # (a) tracking before the attack
    a = np.abs(X[85:95] - r1).max() < 0.01 and not em[:WINDOW[0]].any()
    # (b) first emergency comes from the reachable-set check, flag forced low
    k_e = int(np.flatnonzero(em)[0]) if em.any() else None
    b = (k_e is not None and WINDOW[0] <= k_e and not lg.one_step_safe[k_e]
         and not lg.flag[k_e] and _violations(lg, cfg) == 0)
    # (c) E-DSTC reaches the terminal set, then hands back
    ig = np.flatnonzero(lg.array("ignore"))
    c = (k_e is not None and ig.size > 0 and ig[0] > k_e
         and lg.j_index[ig[0]] == 0 and (tag[k_e:ig[0]] == "emergency").all())
    # (d) networked tracking after the window
    r2 = cfg.scenario("attack-actuation").reference(199)
    d = (ig.size > 0 and ig[-1] > WINDOW[1] and (tag[ig[-1]:] == "network").all()
         and np.abs(X[-10:] - r2).max() < 0.01)
    e = lg.ok and _violations(lg, cfg) == 0
    ok = bool(a and b and c and d and e)
    record(7, ok, f"(a) {a} (b) {b} emergency at k={k_e} (c) {c} T0 at k="
                  f"{ig[0] if ig.size else None} (d) {d} (e) {e}")
    assert ok


# ---------------------------------------------------------------------------
# 8. scenario B


def test_c08_scenario_b(cfg, art):
    sc = cfg.scenario("attack-measurement")
    lg = run_scenario(art.loop, sc)
    an = lg.array("anomaly")
    # (a) quiet while the injection is inside the detector's reachable-set margin
    quiet = []
    for k in range(WINDOW[0], WINDOW[1] + 1):
        R = reach_one_step(art.ms, lg.x_received[k - 1], lg.u_net[k - 1], cfg.w())
        margin = support(R, [1.0, 0.0]) - R.center[0]
        if 0.0025 * (k - 94) <= margin:
            quiet.append(not an[k])
    a = len(quiet) > 0 and all(quiet)
    k_d = int(np.flatnonzero(an)[0]) if an.any() else None
    b = k_d is not None and WINDOW[0] <= k_d <= WINDOW[1]
    c = (b and lg.emergency[k_d] and lg.flag[k_d] and lg.one_step_safe[k_d]
         and lg.input_admissible[k_d])
    n_ignore = int(lg.array("ignore").sum())
    d = n_ignore == 1
    e = lg.ok and _violations(lg, cfg) == 0
    ok = bool(a and b and c and d and e)
    record(8, ok, f"(a) {a} over {len(quiet)} sub-margin steps (b) {b} detection at k={k_d} "
                  f"(c) {c} (d) {d} ignore count {n_ignore} (e) {e}")
    assert ok


# ---------------------------------------------------------------------------
# 9. safety across seeds


def test_c09_safety_sweep(cfg, art):
    t = time.perf_counter()
    viol = {}
    for name in ("attack-actuation", "attack-measurement"):
        logs = _pool_runs(art.loop, cfg, name, range(50))
        viol[name] = sum(int(not lg.ok or len(lg) != 200) + _violations(lg, cfg) for lg in logs)
    dt = time.perf_counter() - t
    ok = all(v == 0 for v in viol.values())
    record(9, ok, f"violations over 50 seeds: A {viol['attack-actuation']}, "
                  f"B {viol['attack-measurement']}, {dt:.0f} s")
    assert ok


# ---------------------------------------------------------------------------
# 10. set primitives vs brute-force vertex oracles


def _random_zono(rng):
    p = int(rng.integers(1, 7))
    return Zonotope(rng.normal(size=2), rng.normal(size=(2, p)))


def _oracle_vertices(z):
    pts = np.array([z.center + z.generators @ np.array(s)
                    for s in itertools.product([-1.0, 1.0], repeat=z.n_generators)])
    return pts


def _hull(pts):
    try:
        return ConvexHull(pts)
    except Exception:  # degenerate (collinear) zonotope
        return None


def test_c10_primitive_oracles():
    rng = np.random.default_rng(10)
    dis = {"contains_point": 0, "zonotope_in_hpolytope": 0, "support": 0}
    n = 0
    while n < 200:
        z = _random_zono(rng)
        V = _oracle_vertices(z)
        hull = _hull(V)
        if hull is None:
            continue
        n += 1
        # support
        d = rng.normal(size=2)
        if abs(support(z, d) - (V @ d).max()) > 1e-9 * (1 + abs((V @ d).max())):
            dis["support"] += 1
        # point membership, skipping points within 1e-6 of the boundary
        while True:
            x = z.center + rng.normal(size=2) * np.abs(z.generators).sum(axis=1) * 0.8
            dist = (hull.equations[:, :2] @ x + hull.equations[:, 2]).max()
            if abs(dist) > 1e-6:
                break
        if contains_point(z, x) != (dist < 0):
            dis["contains_point"] += 1
        # polytope containment: random box, skip near-tight cases
        lo = z.center - np.abs(z.generators).sum(axis=1) * rng.uniform(0.6, 1.4, 2)
        hi = z.center + np.abs(z.generators).sum(axis=1) * rng.uniform(0.6, 1.4, 2)
        P = HPolytope.from_box(lo, hi)
        slack = (V @ P.H.T - P.h).max()
        if abs(slack) < 1e-6:
            continue
        if zonotope_in_hpolytope(z, P) != (slack <= 0):
            dis["zonotope_in_hpolytope"] += 1
    total = sum(dis.values())
    record(10, total == 0, f"disagreements on 200 instances: {dis}")
    assert total == 0


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))

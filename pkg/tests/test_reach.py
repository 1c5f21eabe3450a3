import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddsafe.datamodel import ModelSet, build_model_set, stack
from ddsafe.pipeline import collect
from ddsafe.reach import ReachError, detect, reach_one_step, verify_safety
from ddsafe.setops import HPolytope, MatrixZonotope, Zonotope, contains_point, support
from ddsafe.sim import run_scenario


def test_point_model_point_noise():
    A = np.array([[0.5, 0.1], [0.0, 0.7]])
    B = np.array([[1.0], [0.5]])
    ms = ModelSet(MatrixZonotope(np.hstack([A, B])), 2, 1)
    R = reach_one_step(ms, [1.0, 2.0], [0.3], Zonotope([0.0, 0.0]))
    assert R.n_generators == 0
    np.testing.assert_allclose(R.center, A @ [1.0, 2.0] + B @ [0.3])


def test_dimension_errors(art, cfg):
    with pytest.raises(ReachError):
        reach_one_step(art.ms, [0.0], [0.0, 0.0, 0.0], cfg.w())
    with pytest.raises(ReachError):
        reach_one_step(art.ms, [0.0, 0.0], [0.0, 0.0, 0.0], Zonotope([0.0]))


def test_monte_carlo_at_equilibrium(art, cfg):
    rng = np.random.default_rng(0)
    x, u = art.loop.tracker.reference([0.1, 0.03])
    R = reach_one_step(art.ms, x, u, cfg.w())
    w = cfg.w()
    for _ in range(1000):
        nxt = cfg.A @ x + cfg.B @ u + w.center + w.generators @ rng.uniform(-1, 1, 2)
        assert contains_point(R, nxt)


def test_support_dominates_vertex_models(art, cfg):
    """Vertex models of the full set: the support maximizer and random sign patterns."""
    rng = np.random.default_rng(1)
    ms, w = art.ms, cfg.w()
    for _ in range(10):
        z = np.r_[rng.uniform(cfg.x_lower, cfg.x_upper), rng.uniform(cfg.u_lower, cfg.u_upper)]
        R = reach_one_step(ms, z[:2], z[2:], w)
        gz = ms.mz.generators @ z
        for d in np.vstack([np.eye(2), -np.eye(2)]):
            best = np.sign(gz @ d)
            pool = [best] + list(rng.choice([-1.0, 1.0], size=(20, gz.shape[0])))
            oracle = max(d @ (ms.mz.center @ z + s @ gz) for s in pool) + support(w, d)
            assert support(R, d) >= oracle - 1e-9
            assert support(R, d) == pytest.approx(d @ (ms.mz.center @ z + best @ gz)
                                                  + support(w, d), abs=1e-12)


def test_detect_examples(art, cfg):
    rng = np.random.default_rng(2)
    w = cfg.w()
    x, u = np.array([0.05, 0.0]), np.array([0.1, -0.1, 0.0])
    nxt = cfg.A @ x + cfg.B @ u + w.generators @ rng.uniform(-1, 1, 2)
    v = detect(art.ms, x, u, nxt, w)
    assert not v.anomaly
    np.testing.assert_array_equal(v.tested_state, nxt)
    assert not detect(art.ms, x, u, v.reach_set.center, w).anomaly
    width = support(v.reach_set, [1.0, 0.0]) - v.reach_set.center[0]
    moved = v.reach_set.center + np.array([width + 0.01, 0.0])
    assert detect(art.ms, x, u, moved, w).anomaly


def test_verify_safety_examples(art, cfg):
    ms, w, u_set = art.ms, cfg.w(), cfg.u_set()
    x_eta = art.loop.x_eta
    x = np.zeros(2)
    u_ok = np.zeros(3)
    ok = verify_safety(ms, x, u_ok, u_set, x_eta, w, flag=False, ignore=False)
    assert ok.input_admissible and ok.one_step_safe and not ok.emergency_required
    bad_u = u_ok.copy()
    bad_u[0] = cfg.u_upper[0] + 0.01
    v = verify_safety(ms, x, bad_u, u_set, x_eta, w, False, False)
    assert not v.input_admissible and v.emergency_required
    assert verify_safety(ms, x, u_ok, u_set, x_eta, w, True, False).emergency_required
    assert not verify_safety(ms, x, u_ok, u_set, x_eta, w, True, True).emergency_required
    # near the boundary of X_eta with an input pushing outward along a facet normal
    i = int(np.argmax(x_eta.h))
    d = x_eta.H[i]
    V = np.array([p for p in itertools.product(*zip(cfg.u_lower, cfg.u_upper))])
    u_out = V[np.argmax(V @ (cfg.B.T @ d))]
    x_edge = x_eta.chebyshev_center()[0]
    t = (x_eta.h - x_eta.H @ x_edge)[i] / (d @ d)
    x_edge = x_edge + 0.98 * t * d
    v = verify_safety(ms, x_edge, u_out, u_set, x_eta, w, False, False)
    assert not v.one_step_safe and v.emergency_required


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_enlarging_noise_never_adds_anomalies(cfg, seed):
    rng = np.random.default_rng(seed)
    d = stack(collect(cfg, seed=seed % 1000))
    w = cfg.w()
    w2 = Zonotope(w.center, 2 * w.generators)
    ms1, ms2 = build_model_set(d, w), build_model_set(d, w2)
    for _ in range(10):
        x = rng.uniform(cfg.x_lower, cfg.x_upper)
        u = rng.uniform(cfg.u_lower, cfg.u_upper)
        x_now = cfg.A @ x + cfg.B @ u + rng.normal(scale=0.004, size=2)
        if not detect(ms1, x, u, x_now, w).anomaly:
            assert not detect(ms2, x, u, x_now, w2).anomaly


def test_no_false_positives_nominal(art, cfg):
    for seed in range(3):
        lg = run_scenario(art.loop, cfg.scenario("nominal"), seed=seed)
        assert not any(lg.anomaly)


def test_one_step_ahead_replay(art, cfg):
    """Whenever the networked input was applied, every model successor stayed in X_eta."""
    lg = run_scenario(art.loop, cfg.scenario("attack-actuation"))
    ms, w, x_eta = art.ms, cfg.w(), art.loop.x_eta
    for k in range(len(lg)):
        if lg.controller_tag[k] != "network":
            continue
        z = np.r_[lg.x_true[k], lg.u_received[k]]
        gz = ms.mz.generators @ z
        for d, h in zip(x_eta.H, x_eta.h):
            worst = d @ (ms.mz.center @ z + np.sign(gz @ d) @ gz) + support(w, d)
            assert worst <= h + 1e-9

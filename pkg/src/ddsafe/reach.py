"""One-step reachable sets from data: anomaly detector and plant-side safety check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import ModelSet
from .setops import (HPolytope, Zonotope, contains_point, matzono_times_vector, merge_parallel,
                     zonotope_in_hpolytope)


class ReachError(ValueError):
    pass


@dataclass(frozen=True)
class DetectorVerdict:
    anomaly: bool
    reach_set: Zonotope
    tested_state: np.ndarray


@dataclass(frozen=True)
class SafetyVerdict:
    input_admissible: bool
    one_step_safe: bool
    s_plus: Zonotope
    emergency_required: bool


def _xu(ms: ModelSet, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if x.size != ms.n or u.size != ms.m:
        raise ReachError(f"expected x of size {ms.n} and u of size {ms.m}, got {x.size} and {u.size}")
    return np.concatenate([x, u])


def reach_one_step(ms: ModelSet, x, u, w: Zonotope) -> Zonotope:
    """M_AB [x; u] + W using the full (unreduced) model set.

    Parallel generators are merged, which leaves the set unchanged; with a
    box disturbance the result collapses to n + n_w generators.
    """
    if w.dim != ms.n:
        raise ReachError("disturbance dimension does not match the state")
    return merge_parallel(matzono_times_vector(ms.mz, _xu(ms, x, u)) + w)


def detect(ms: ModelSet, x_prev, u_prev, x_now, w: Zonotope) -> DetectorVerdict:
    """Anomaly iff the received state is not reachable from the previous transition."""
    R = reach_one_step(ms, x_prev, u_prev, w)
    x_now = np.asarray(x_now, dtype=float).ravel()
    return DetectorVerdict(not contains_point(R, x_now), R, x_now)


def verify_safety(ms: ModelSet, x, u_received, u_set: HPolytope, x_eta: HPolytope, w: Zonotope,
                  flag: bool, ignore: bool) -> SafetyVerdict:
    """Plant-side check of the received input before it is applied."""
    u = np.asarray(u_received, dtype=float).ravel()
    admissible = bool(u_set.contains(u))
    s_plus = reach_one_step(ms, x, u, w)
    safe = zonotope_in_hpolytope(s_plus, x_eta)
    emergency = (not admissible) or (not safe) or (bool(flag) and not bool(ignore))
    return SafetyVerdict(admissible, safe, s_plus, emergency)

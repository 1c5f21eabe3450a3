"""Robust controllable sets and the emergency set-theoretic controller.

Offline: a terminal gain with a certified robust control invariant set
``t0``, followed by a family of robust one-step controllable (ROSC) sets built
in the joint (x, u) space, inner-approximated by zonotopes and projected back
onto the state. Online: scan the family for the smallest level containing the
state and pick an input from that level's (x, u) zonotope.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import solve_discrete_are

from . import lp
from .datamodel import ModelSet
from .setops import (HPolytope, MatrixZonotope, SetError, VertexModelSet, Zonotope,
                     default_template, inner_zonotope, project, reduce_order, supports,
                     vertices, zonotope_in_hpolytope, zonotope_to_hpolytope)

log = logging.getLogger(__name__)

RCI_EPS = 1e-6
RCI_MARGIN = 0.05
RCI_MAX_TERMS = 50
TEMPLATE_CAP = 40
CERT_TOL = 1e-9


class SynthesisError(RuntimeError):
    pass


class ControlError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# terminal controller and RCI set

def lqr_gain(A, B, Q=None, R=None) -> np.ndarray:
    """Discrete-time LQR. Returns K with u = K x."""
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    n, m = B.shape
    Q = np.eye(n) if Q is None else np.atleast_2d(Q)
    R = np.eye(m) if R is None else np.atleast_2d(R)
    try:
        P = solve_discrete_are(A, B, Q, R)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SynthesisError(f"Riccati equation has no stabilizing solution: {exc}") from None
    BtP = B.T @ P
    return -np.linalg.solve(R + BtP @ B, BtP @ A)


@dataclass(frozen=True)
class TerminalController:
    gain: np.ndarray
    offset: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return self.gain @ np.asarray(x, dtype=float) + self.offset


def closed_loop_matzono(M: MatrixZonotope, K: np.ndarray) -> MatrixZonotope:
    """{[A, B] [I; K]} for [A, B] in M."""
    n = M.shape[0]
    L = np.vstack([np.eye(n), K])
    G = M.generators @ L if M.n_generators else None
    return MatrixZonotope(M.center @ L, G)


def matzono_times_zonotope(M: MatrixZonotope, z: Zonotope) -> Zonotope:
    """Outer enclosure of {X y : X in M, y in z}."""
    gens = [M.center @ z.generators]
    for Gi in M.generators:
        gens.append((Gi @ z.center)[:, None])
        gens.append(Gi @ z.generators)
    return Zonotope(M.center @ z.center, np.hstack(gens))


def certify_rci(vs: VertexModelSet, term: TerminalController, t0: Zonotope, u_set: HPolytope,
                w: Zonotope, x_set: HPolytope, tol: float = CERT_TOL, report: bool = False):
    """Vertex check of robust invariance of t0 under u = K x + offset.

    Returns a bool, or (bool, reason) when report=True.
    """
    def out(ok, why=""):
        return (ok, why) if report else ok

    if not zonotope_in_hpolytope(t0, x_set, tol):
        return out(False, "t0 not inside the state constraints")
    tpoly = zonotope_to_hpolytope(t0)
    V = vertices(t0)
    U = V @ term.gain.T + term.offset
    bad_u = ~u_set.contains_many(U, tol)
    if bad_u.any():
        return out(False, f"terminal input inadmissible at vertex {V[np.argmax(bad_u)]}")
    Wv = vertices(w)
    # successors for every (model, t0 vertex, w vertex)
    nxt = np.einsum("kij,vj->kvi", vs.A, V) + np.einsum("kij,vj->kvi", vs.B, U)
    succ = nxt[:, :, None, :] + Wv[None, None, :, :]
    flat = succ.reshape(-1, t0.dim)
    inside = tpoly.contains_many(flat, tol)
    if not inside.all():
        k = int(np.argmin(inside))
        kv, rest = divmod(k, V.shape[0] * Wv.shape[0])
        return out(False, f"successor leaves t0: model {kv}, vertex {V[rest // Wv.shape[0]]}")
    return out(True)


def synth_terminal(ms: ModelSet, x_set: HPolytope, u_set: HPolytope, w: Zonotope,
                   Q=None, R=None, rci_eps: float = RCI_EPS, rci_margin: float = RCI_MARGIN,
                   max_terms: int = RCI_MAX_TERMS, order: int = 20, attempts: int = 6):
    """Terminal LQR gain plus a certified RCI zonotope.

    The candidate is the robust reachable set of the closed loop from W,
    iterated as E <- W + M_cl E (M_cl the closed-loop matrix zonotope) with
    order reduction, then inflated by (1 + margin). If certification fails the
    margin is doubled, up to `attempts` times.
    """
    if ms.vertices is None or ms.reduced is None:
        raise SynthesisError("model set needs a reduced copy and its vertices")
    K = lqr_gain(ms.A_center, ms.B_center, Q, R)
    term = TerminalController(K, np.zeros(ms.m))
    Mcl = closed_loop_matzono(ms.reduced, K)
    E = w
    prev = np.abs(E.generators).sum(axis=1)
    for _ in range(max_terms):
        E = reduce_order(matzono_times_zonotope(Mcl, E) + w, order)
        rad = np.abs(E.generators).sum(axis=1)
        if np.all(np.abs(rad - prev) < rci_eps):
            break
        prev = rad
    margin = rci_margin
    why = ""
    for _ in range(attempts):
        cand = Zonotope(E.center, (1 + margin) * E.generators)
        ok, why = certify_rci(ms.vertices, term, cand, u_set, w, x_set, report=True)
        if ok:
            return term, cand
        margin *= 2
    raise SynthesisError(f"RCI certification failed: {why}")


# ---------------------------------------------------------------------------
# ROSC family

def shrink_offsets(h, H, w: Zonotope) -> np.ndarray:
    """Per-row h_r - max_{w in W} H_r w."""
    return np.asarray(h, dtype=float) - supports(w, H)


def _hull_rows(P: np.ndarray) -> np.ndarray:
    """Indices of rows of P that are vertices of their convex hull."""
    Pu, idx = np.unique(np.round(P, 14), axis=0, return_index=True)
    if Pu.shape[0] <= 2:
        return idx
    c = Pu.mean(axis=0)
    D = Pu - c
    U, s, Vt = np.linalg.svd(D, full_matrices=False)
    r = int(np.sum(s > 1e-12 * max(1.0, s[0])))
    if r == 0:
        return idx[:1]
    Y = D @ Vt[:r].T
    if r == 1:
        return idx[[int(np.argmin(Y[:, 0])), int(np.argmax(Y[:, 0]))]]
    from scipy.spatial import ConvexHull

    hull = ConvexHull(Y)
    return idx[np.sort(hull.vertices)]


def stacked_polytope(vs: VertexModelSet, prev: HPolytope, x_set: HPolytope,
                     u_set: HPolytope) -> HPolytope:
    """(x, u) with x in X, u in U and A_i x + B_i u in prev for every vertex model.

    `prev` must already carry shrunk offsets. Rows that are convex combinations
    of other rows with the same offset are dropped (they are implied).
    """
    n, m = x_set.dim, u_set.dim
    AB = vs.AB  # (k, n, n+m)
    rows, rhs = [np.hstack([x_set.H, np.zeros((x_set.H.shape[0], m))])], [x_set.h]
    for Hr, hr in zip(prev.H, prev.h):
        pts = np.einsum("i,kij->kj", Hr, AB)
        keep = _hull_rows(pts)
        rows.append(pts[keep])
        rhs.append(np.full(keep.size, hr))
    rows.append(np.hstack([np.zeros((u_set.H.shape[0], n)), u_set.H]))
    rhs.append(u_set.h)
    return HPolytope(np.vstack(rows), np.concatenate(rhs))


def coupled_directions(A, B, K=None) -> np.ndarray:
    """State axes paired with the inputs that cancel (or regulate) them.

    Directions (e_i, -B^+ A e_i) keep the nominal successor fixed, so
    generators along them stretch the state projection without moving the
    successor; (e_i, K e_i) follow the terminal feedback.
    """
    n = A.shape[0]
    out = [np.hstack([np.eye(n), -(np.linalg.pinv(B) @ A).T])]
    if K is not None:
        out.append(np.hstack([np.eye(n), K.T]))
    return np.vstack(out)


@dataclass(frozen=True)
class RoscLevel:
    xi: Zonotope
    xi_poly: Optional[HPolytope]
    tx: Zonotope
    tx_poly: HPolytope


@dataclass
class RoscFamily:
    t0: Zonotope
    t0_poly: HPolytope
    levels: List[RoscLevel]
    terminal: Optional[TerminalController] = None

    @property
    def N(self) -> int:
        return len(self.levels)

    @property
    def n(self) -> int:
        return self.t0.dim

    @property
    def m(self) -> int:
        if self.levels:
            return self.levels[0].xi.dim - self.n
        return 0 if self.terminal is None else self.terminal.gain.shape[0]

    def state_set(self, j: int) -> Zonotope:
        return self.t0 if j == 0 else self.levels[j - 1].tx

    def state_poly(self, j: int) -> HPolytope:
        return self.t0_poly if j == 0 else self.levels[j - 1].tx_poly

    def outer_poly(self) -> HPolytope:
        """H-form of the last level (the tracking controller's safe region)."""
        return self.state_poly(self.N)


def deadbeat_gain(A, B) -> np.ndarray:
    """u = F x cancelling the nominal state transition (least-norm)."""
    return -np.linalg.pinv(B) @ A


def lifted_template(n: int, m: int, gains, n_angles: int = 12):
    """State directions lifted through candidate gains, plus the input axes.

    Returns (template, groups, weights). For n = 2 the state directions are
    n_angles evenly spaced unit vectors on a half circle; otherwise the axes.
    Each group collects the lifted copies of one state direction, weighted by
    their state length, so growing a group grows the state projection.
    """
    if n == 2:
        ang = np.pi * np.arange(n_angles) / n_angles
        D = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        D = np.eye(n)
    rows, grp = [], []
    for gi, d in enumerate(D):
        for F in gains:
            v = np.concatenate([d, np.atleast_2d(F) @ d])
            rows.append(v / np.linalg.norm(v))
            grp.append(gi)
    for i in range(m):
        rows.append(np.eye(n + m)[n + i])
        grp.append(-1)
    T = np.array(rows)
    grp = np.array(grp)
    xlen = np.linalg.norm(T[:, :n], axis=1)
    groups = np.zeros((D.shape[0], T.shape[0]))
    for gi in range(D.shape[0]):
        groups[gi, grp == gi] = xlen[grp == gi]
    return T, groups, xlen


def rosc_step(vs: VertexModelSet, prev: HPolytope, x_set: HPolytope, u_set: HPolytope,
              template=None, groups=None, weights=None) -> RoscLevel:
    """One level of the family from the (already shrunk) previous target."""
    n = x_set.dim
    P = stacked_polytope(vs, prev, x_set, u_set)
    if template is None:
        template = default_template(P, cap=TEMPLATE_CAP)
        groups = weights = None
    try:
        xi = inner_zonotope(P, template, weights=weights, groups=groups)
    except SetError as exc:
        raise SynthesisError(f"empty augmented set: {exc}") from exc
    tx = project(xi, range(n)).drop_zero_generators(1e-12)
    if tx.n_generators == 0:
        raise SynthesisError("augmented set collapsed to a point")
    return RoscLevel(xi, P, tx, zonotope_to_hpolytope(tx))


def synth_family(ms: ModelSet, term: TerminalController, t0: Zonotope, x_set: HPolytope,
                 u_set: HPolytope, w: Zonotope, N: int, gains=None,
                 n_angles: int = 12) -> RoscFamily:
    """T^1..T^N, each robustly one-step controllable into the previous one.

    The template lifts state directions through the terminal gain, the
    nominal deadbeat gain and the zero gain unless `gains` is given.
    """
    if ms.vertices is None:
        raise SynthesisError("model set has no vertex models")
    if gains is None:
        gains = [term.gain, deadbeat_gain(ms.A_center, ms.B_center), np.zeros((ms.m, ms.n))]
    template, groups, weights = lifted_template(ms.n, ms.m, gains, n_angles)
    fam = RoscFamily(t0, zonotope_to_hpolytope(t0), [], term)
    prev = fam.t0_poly
    for j in range(1, N + 1):
        target = HPolytope(prev.H, shrink_offsets(prev.h, prev.H, w))
        try:
            level = rosc_step(ms.vertices, target, x_set, u_set, template, groups, weights)
        except SynthesisError as exc:
            raise SynthesisError(f"level {j}: {exc}") from exc
        if not zonotope_in_hpolytope(level.tx, x_set):
            raise SynthesisError(f"level {j} leaves the state constraints")
        fam.levels.append(level)
        prev = level.tx_poly
        log.debug("level %d: %d generators", j, level.tx.n_generators)
    return fam


# ---------------------------------------------------------------------------
# online

def membership_index(fam: RoscFamily, x, tol: float = 1e-9) -> Optional[int]:
    """Smallest j with x in the j-th state set (exact H-forms), else None."""
    x = np.asarray(x, dtype=float)
    for j in range(fam.N + 1):
        if fam.state_poly(j).contains(x, tol):
            return j
    return None


def control(fam: RoscFamily, term: TerminalController, x, u_prev=None, j: Optional[int] = None):
    """Emergency input at x; returns (u, j).

    Level 0 uses the terminal law. Otherwise the input minimizes |u - u_prev|_1
    subject to (x, u) lying in the level's (x, u) zonotope.
    """
    x = np.asarray(x, dtype=float)
    if j is None:
        j = membership_index(fam, x)
    if j is None:
        raise ControlError("state outside every controllable set")
    if j == 0:
        return term(x), 0
    xi = fam.levels[j - 1].xi
    n = x.size
    m = xi.dim - n
    p = xi.n_generators
    c, G = xi.center, xi.generators
    ref = c[n:] if u_prev is None else np.asarray(u_prev, dtype=float)
    # variables: [u (m), beta (p), t (m)]
    nv = m + p + m
    A_eq = np.zeros((n + m, nv))
    A_eq[:n, m:m + p] = G[:n]
    A_eq[n:, :m] = -np.eye(m)
    A_eq[n:, m:m + p] = G[n:]
    b_eq = np.concatenate([x - c[:n], -c[n:]])
    A_ub = np.zeros((2 * m, nv))
    A_ub[:m, :m] = np.eye(m)
    A_ub[:m, m + p:] = -np.eye(m)
    A_ub[m:, :m] = -np.eye(m)
    A_ub[m:, m + p:] = -np.eye(m)
    b_ub = np.concatenate([ref, -ref])
    cost = np.concatenate([np.zeros(m + p), np.ones(m)])
    lower = np.concatenate([np.full(m, -np.inf), -np.ones(p), np.zeros(m)])
    upper = np.concatenate([np.full(m, np.inf), np.ones(p), np.full(m, np.inf)])
    sol = lp.solve_problem(cost, A_ub, b_ub, A_eq, b_eq, lower, upper)
    if not sol.optimal:
        raise ControlError(f"level {j} control LP {sol.status} at x={x}")
    return sol.x[:m], j

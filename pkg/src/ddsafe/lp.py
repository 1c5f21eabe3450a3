"""Dense two-phase bounded-variable simplex.

The problems solved in this package are small (a few hundred rows at most),
so everything is kept in a dense tableau. Nonbasic variables sit at either
their lower or upper bound, which keeps box-bounded problems (zonotope
membership, inner approximations) from growing extra rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

LE = "<="
EQ = "=="

# Global tolerances; adjust with set_tolerances().
TOL_FEAS = 1e-9
TOL_OPT = 1e-9
_TOL_PIV = 1e-9
_REINVERT_EVERY = 80
_BLAND_AFTER = 30
_TIE_PIVOT_RATIO = 1e-2
# tall problems go through the dual
_DUAL_MIN_ROWS = 60
_DUAL_RATIO = 3.0


def set_tolerances(feas: Optional[float] = None, opt: Optional[float] = None) -> None:
    global TOL_FEAS, TOL_OPT
    if feas is not None:
        TOL_FEAS = float(feas)
    if opt is not None:
        TOL_OPT = float(opt)


class LPError(Exception):
    pass


class LPInputError(LPError, ValueError):
    """Malformed linear program (shape or bound inconsistency)."""


class LPSolverError(LPError, RuntimeError):
    """The solver could not reach a verdict (iteration cap, numerical breakdown)."""


@dataclass(frozen=True)
class LinearProgram:
    """minimize c @ x  s.t.  A[i] @ x (<= | ==) b[i],  lower <= x <= upper."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    kinds: tuple
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        nvar = c.shape[0]
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, nvar)
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).reshape(-1)
        if A.ndim != 2:
            raise LPInputError("constraint matrix must be 2-D")
        if A.shape[1] != nvar:
            raise LPInputError(f"objective has {nvar} entries but A has {A.shape[1]} columns")
        if A.shape[0] != b.shape[0]:
            raise LPInputError(f"A has {A.shape[0]} rows but rhs has {b.shape[0]}")
        kinds = tuple(self.kinds)
        if len(kinds) != A.shape[0]:
            raise LPInputError("row kinds length differs from row count")
        if any(k not in (LE, EQ) for k in kinds):
            raise LPInputError(f"row kinds must be '{LE}' or '{EQ}'")
        lower = np.full(nvar, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        upper = np.full(nvar, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        lower = np.broadcast_to(lower, (nvar,)).astype(float)
        upper = np.broadcast_to(upper, (nvar,)).astype(float)
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise LPInputError("NaN bound")
        if np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise LPInputError("lower bound +inf or upper bound -inf")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise LPInputError("non-finite problem data")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @classmethod
    def build(cls, c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lower=None, upper=None):
        """Assemble from separate inequality/equality blocks (scipy-like)."""
        c = np.atleast_1d(np.asarray(c, dtype=float))
        nvar = c.shape[0]
        blocks, rhs, kinds = [], [], []
        for M, v, kind in ((A_ub, b_ub, LE), (A_eq, b_eq, EQ)):
            if M is None:
                continue
            M = np.asarray(M, dtype=float).reshape(-1, nvar)
            blocks.append(M)
            rhs.append(np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1))
            kinds += [kind] * M.shape[0]
        A = np.vstack(blocks) if blocks else np.zeros((0, nvar))
        b = np.concatenate(rhs) if rhs else np.zeros(0)
        return cls(c, A, b, tuple(kinds), lower, upper)


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: Optional[np.ndarray] = None
    value: Optional[float] = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Tableau:
    """min cost @ y  s.t.  A y = b,  0 <= y <= ub  (b >= 0 after row flips)."""

    def __init__(self, A, b, ub, max_iter):
        R, N = A.shape
        self.sign = np.where(b < 0, -1.0, 1.0)
        A = A * self.sign[:, None]
        b = b * self.sign
        # Reuse existing unit columns as the starting basis; artificials elsewhere.
        basis = -np.ones(R, dtype=int)
        if R and N:
            nz = A != 0
            unit = (nz.sum(axis=0) == 1) & np.isinf(ub)
            for j in np.flatnonzero(unit):
                r = int(np.flatnonzero(nz[:, j])[0])
                if basis[r] < 0 and A[r, j] == 1.0:
                    basis[r] = j
        art_rows = np.flatnonzero(basis < 0)
        n_art = art_rows.size
        art = np.zeros((R, n_art))
        art[art_rows, np.arange(n_art)] = 1.0
        basis[art_rows] = N + np.arange(n_art)
        self.A_full = np.hstack([A, art])
        self.b = b
        self.n_struct = N
        self.n_art = n_art
        self.ub = np.concatenate([ub, np.full(n_art, np.inf)])
        self.basis = basis
        self.inv_cols = basis.copy()  # column j that started as e_r gives B^-1[:, r]
        self.T = self.A_full.copy()
        self.xB = b.copy()
        self.at_upper = np.zeros(N + n_art, dtype=bool)
        self.enterable = np.ones(N + n_art, dtype=bool)
        self.enterable[N:] = False
        self.iterations = 0
        self.max_iter = max_iter
        self._since_reinvert = 0

    # -- linear algebra helpers -------------------------------------------------
    def _nonbasic_values(self):
        y = np.where(self.at_upper, self.ub, 0.0)
        y[self.basis] = 0.0
        return y

    def reinvert(self):
        Bm = self.A_full[:, self.basis]
        try:
            self.T = np.linalg.solve(Bm, self.A_full)
            yN = self._nonbasic_values()
            self.xB = np.linalg.solve(Bm, self.b - self.A_full @ yN)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise LPSolverError("singular basis during reinversion") from exc
        self._since_reinvert = 0

    def values(self):
        y = self._nonbasic_values()
        y[self.basis] = self.xB
        return y

    # -- main loop ----------------------------------------------------------------
    def run(self, cost):
        """Iterate to optimality for `cost`. Returns 'optimal' or 'unbounded'."""
        degenerate = 0
        ncols = cost.shape[0]
        idx = np.arange(ncols)
        while True:
            if self._since_reinvert >= _REINVERT_EVERY:
                self.reinvert()
            d = cost - cost[self.basis] @ self.T
            nonbasic = np.ones(ncols, dtype=bool)
            nonbasic[self.basis] = False
            movable = self.enterable & nonbasic & (self.ub > 0)
            inc = movable & ~self.at_upper & (d < -TOL_OPT)
            dec = movable & self.at_upper & (d > TOL_OPT)
            cand = inc | dec
            if not cand.any():
                if self._since_reinvert:
                    # confirm optimality on a freshly factored basis
                    self.reinvert()
                    d = cost - cost[self.basis] @ self.T
                    inc = movable & ~self.at_upper & (d < -TOL_OPT)
                    dec = movable & self.at_upper & (d > TOL_OPT)
                    if (inc | dec).any():
                        continue
                return "optimal"
            if self.iterations >= self.max_iter:
                raise LPSolverError(f"simplex iteration cap ({self.max_iter}) exceeded")
            self.iterations += 1
            if degenerate >= _BLAND_AFTER:
                j = int(idx[cand][0])
            else:
                score = np.where(cand, np.abs(d), -1.0)
                j = int(np.argmax(score))
            delta = -1.0 if self.at_upper[j] else 1.0
            alpha = self.T[:, j] * delta
            ub_B = self.ub[self.basis]
            piv_tol = _TOL_PIV * max(1.0, float(np.abs(alpha).max(initial=0.0)))
            pos = alpha > piv_tol
            neg = (alpha < -piv_tol) & np.isfinite(ub_B)
            room = np.full(alpha.shape, np.inf)
            room[pos] = np.maximum(self.xB[pos], 0.0)
            room[neg] = np.maximum(ub_B[neg] - self.xB[neg], 0.0)
            step = np.abs(alpha)
            with np.errstate(divide="ignore", invalid="ignore"):
                lim = np.where(pos | neg, room / np.where(pos | neg, step, 1.0), np.inf)
                # Harris pass: bound relaxed by the feasibility tolerance
                relaxed = np.where(pos | neg, (room + TOL_FEAS) / np.where(pos | neg, step, 1.0), np.inf)
            t_row = lim.min() if lim.size else np.inf
            t_flip = self.ub[j]
            if not np.isfinite(t_row) and not np.isfinite(t_flip):
                return "unbounded"
            if t_flip <= t_row:
                t = t_flip
                self.xB -= t * alpha
                self.at_upper[j] = not self.at_upper[j]
            else:
                if degenerate >= _BLAND_AFTER:
                    ties = np.flatnonzero(lim <= t_row + 1e-12 * max(1.0, t_row))
                    # drop badly conditioned pivots, then Bland: lowest-indexed basic variable
                    ties = ties[step[ties] >= _TIE_PIVOT_RATIO * step[ties].max()]
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    cand_rows = np.flatnonzero(lim <= relaxed.min())
                    r = int(cand_rows[np.argmax(step[cand_rows])])
                t = lim[r]
                enter_val = (0.0 if delta > 0 else self.ub[j]) + delta * t
                self.xB -= t * alpha
                leaving = self.basis[r]
                self.at_upper[leaving] = alpha[r] < 0
                self.basis[r] = j
                self.xB[r] = enter_val
                self.at_upper[j] = False
                prow = self.T[r] / self.T[r, j]
                col = self.T[:, j].copy()
                col[r] = 0.0
                self.T -= np.outer(col, prow)
                self.T[r] = prow
                self._since_reinvert += 1
            degenerate = degenerate + 1 if t <= TOL_FEAS else 0

    def multipliers(self, cost):
        Binv = self.T[:, self.inv_cols]
        return (cost[self.basis] @ Binv) * self.sign


def _standardize(lp: LinearProgram):
    """Map to min c'y, A'y = b', 0 <= y <= ub'. Returns data plus a back-map."""
    A, c = lp.A, lp.c
    R, N = A.shape
    lo, hi = lp.lower, lp.upper
    if np.any(lo > hi):
        return None
    has_lo = np.isfinite(lo)
    has_hi = ~has_lo & np.isfinite(hi)
    free = ~has_lo & ~has_hi
    # shifted/flipped primary column per variable, extra column for free vars
    sgn = np.where(has_hi, -1.0, 1.0)
    shift = np.where(has_lo, lo, np.where(has_hi, hi, 0.0))
    free_idx = np.flatnonzero(free)
    le = np.array([k == LE for k in lp.kinds], dtype=bool)
    le_idx = np.flatnonzero(le)
    slack = np.zeros((R, le_idx.size))
    slack[le_idx, np.arange(le_idx.size)] = 1.0
    Astd = np.hstack([A * sgn, -A[:, free_idx], slack])
    cost = np.concatenate([c * sgn, -c[free_idx], np.zeros(le_idx.size)])
    ub = np.concatenate([np.where(has_lo, hi - lo, np.inf), np.full(free_idx.size, np.inf),
                         np.full(le_idx.size, np.inf)])
    b = lp.b - A @ shift
    return Astd, b, cost, ub, (sgn, shift, free_idx)


def _recover(back, y, N):
    sgn, shift, free_idx = back
    x = shift + sgn * y[:N]
    x[free_idx] -= y[N:N + free_idx.size]
    return x


def _feasibility_violation(lp: LinearProgram, x: np.ndarray) -> float:
    r = lp.A @ x - lp.b
    eq = np.array([k == EQ for k in lp.kinds], dtype=bool)
    viol = np.where(eq, np.abs(r), np.maximum(r, 0.0))
    out = viol.max() if viol.size else 0.0
    out = max(out, np.max(np.maximum(lp.lower - x, 0.0), initial=0.0))
    out = max(out, np.max(np.maximum(x - lp.upper, 0.0), initial=0.0))
    return float(out)


def solve(lp: LinearProgram, max_iter: Optional[int] = None) -> LpSolution:
    """Solve `lp`; infeasible/unbounded are reported through `status`.

    Raises LPSolverError if the iteration cap is hit or the returned point
    fails the feasibility certificate.
    """
    if not isinstance(lp, LinearProgram):
        raise LPInputError("expected a LinearProgram")
    if _prefer_dual(lp):
        try:
            sol = _solve_dual(lp, max_iter)
        except LPSolverError:
            sol = None
        if sol is not None:
            return sol
    return _solve_primal(lp, max_iter)


def _prefer_dual(lp: LinearProgram) -> bool:
    rows = lp.A.shape[0] + int(np.isfinite(lp.lower).sum() + np.isfinite(lp.upper).sum())
    return rows >= _DUAL_MIN_ROWS and rows > _DUAL_RATIO * (lp.n_vars + 1)


def _solve_dual(lp: LinearProgram, max_iter: Optional[int]) -> Optional[LpSolution]:
    """Tall problems: solve the dual and read x off its simplex multipliers.

    Primal (bounds folded into rows): min c'x, G x <= g, E x = e.
    Dual: min g'y + e'z, G'y + E'z = -c, y >= 0, z free.
    Returns None when the dual route is inconclusive.
    """
    N = lp.n_vars
    eye = np.eye(N)
    le = np.array([k == LE for k in lp.kinds], dtype=bool)
    lo_f = np.isfinite(lp.lower)
    hi_f = np.isfinite(lp.upper)
    G = np.vstack([lp.A[le], -eye[lo_f], eye[hi_f]])
    g = np.concatenate([lp.b[le], -lp.lower[lo_f], lp.upper[hi_f]])
    E = lp.A[~le]
    e = lp.b[~le]
    ny, nz = G.shape[0], E.shape[0]
    dual = LinearProgram(
        c=np.concatenate([g, e]),
        A=np.hstack([G.T, E.T]),
        b=-lp.c,
        kinds=(EQ,) * N,
        lower=np.concatenate([np.zeros(ny), np.full(nz, -np.inf)]),
        upper=np.full(ny + nz, np.inf),
    )
    A, b, cost, ub, _ = _standardize(dual)
    R, M = A.shape
    if max_iter is None:
        max_iter = 5000 + 50 * (R + M)
    tab = _Tableau(A, b, ub, max_iter)
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
    if tab.n_art:
        phase1 = np.zeros(M + tab.n_art)
        phase1[M:] = 1.0
        tab.run(phase1)
        tab.reinvert()
        if float(np.sum(np.maximum(tab.values()[M:], 0.0))) > TOL_FEAS * scale:
            return None  # primal unbounded or infeasible; let the primal route decide
        tab.ub[M:] = 0.0
        tab.xB[tab.basis >= M] = 0.0
    full_cost = np.concatenate([cost, np.zeros(tab.n_art)])
    if tab.run(full_cost) == "unbounded":
        return LpSolution("infeasible", iterations=tab.iterations)
    x = tab.multipliers(full_cost)
    pscale = max(1.0, float(np.max(np.abs(lp.b), initial=0.0)))
    if _feasibility_violation(lp, x) > TOL_FEAS * pscale * 10:
        return None
    return LpSolution("optimal", x, float(lp.c @ x), tab.iterations)


def _solve_primal(lp: LinearProgram, max_iter: Optional[int]) -> LpSolution:
    std = _standardize(lp)
    if std is None:
        return LpSolution("infeasible")
    A, b, cost, ub, back = std
    R, N = A.shape
    if max_iter is None:
        max_iter = 5000 + 50 * (R + N)
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))

    tab = _Tableau(A, b, ub, max_iter)
    if tab.n_art:
        phase1 = np.zeros(N + tab.n_art)
        phase1[N:] = 1.0
        tab.run(phase1)
        tab.reinvert()
        infeas = float(np.sum(np.maximum(tab.values()[N:], 0.0)))
        if infeas > TOL_FEAS * scale:
            return LpSolution("infeasible", iterations=tab.iterations)
        tab.ub[N:] = 0.0
        tab.xB[tab.basis >= N] = 0.0
    full_cost = np.concatenate([cost, np.zeros(tab.n_art)])
    status = tab.run(full_cost)
    if status == "unbounded":
        return LpSolution("unbounded", iterations=tab.iterations)
    y = np.clip(tab.values()[:N], 0.0, ub)
    x = _recover(back, y, lp.n_vars)
    viol = _feasibility_violation(lp, x)
    if viol > TOL_FEAS * scale * 10:
        raise LPSolverError(f"optimal point violates constraints by {viol:.3e}")
    return LpSolution("optimal", x, float(lp.c @ x), tab.iterations)


def solve_problem(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lower=None, upper=None) -> LpSolution:
    return solve(LinearProgram.build(c, A_ub, b_ub, A_eq, b_eq, lower, upper))

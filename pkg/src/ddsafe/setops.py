"""Zonotopes, H-polytopes and matrix zonotopes.

All set objects are immutable; operations return new objects.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lp

ATOL = 1e-9
MAX_VERTEX_BITS = 10


class SetError(ValueError):
    pass


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)


@dataclass(frozen=True)
class Zonotope:
    """{c + G b : |b|_inf <= 1}."""

    center: np.ndarray
    generators: np.ndarray = field(default=None)

    def __post_init__(self):
        c = _vec(self.center)
        G = self.generators
        if G is None:
            G = np.zeros((c.size, 0))
        G = np.asarray(G, dtype=float)
        if G.ndim == 1:
            G = G.reshape(c.size, -1) if c.size > 0 else G.reshape(0, 0)
        if G.size == 0:
            G = G.reshape(c.size, 0)
        if G.shape[0] != c.size:
            raise SetError(f"generator matrix has {G.shape[0]} rows, center has {c.size} entries")
        c.setflags(write=False)
        G.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", G)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def n_generators(self) -> int:
        return self.generators.shape[1]

    @classmethod
    def from_box(cls, lower, upper) -> "Zonotope":
        lower, upper = _vec(lower), _vec(upper)
        return cls((lower + upper) / 2, np.diag((upper - lower) / 2))

    @classmethod
    def point(cls, x) -> "Zonotope":
        return cls(_vec(x))

    def __add__(self, other):
        if isinstance(other, Zonotope):
            return minkowski_sum(self, other)
        return Zonotope(self.center + _vec(other), self.generators)

    def __rmatmul__(self, M):
        return linear_map(M, self)

    def scale(self, factor: float) -> "Zonotope":
        """Scale about the center."""
        return Zonotope(self.center, factor * self.generators)

    def drop_zero_generators(self, tol: float = 0.0) -> "Zonotope":
        keep = np.linalg.norm(self.generators, axis=0) > tol
        return Zonotope(self.center, self.generators[:, keep])

    def interval_bounds(self):
        r = np.abs(self.generators).sum(axis=1)
        return self.center - r, self.center + r

    def support(self, d) -> float:
        return support(self, d)

    def contains(self, x) -> bool:
        return contains_point(self, x)


@dataclass(frozen=True)
class HPolytope:
    """{x : H x <= h}."""

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        h = _vec(self.h)
        if H.shape[0] != h.size:
            raise SetError(f"H has {H.shape[0]} rows, h has {h.size}")
        if H.shape[0] < 1:
            raise SetError("polytope needs at least one halfspace")
        H.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @classmethod
    def from_box(cls, lower, upper) -> "HPolytope":
        lower, upper = _vec(lower), _vec(upper)
        n = lower.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([upper, -lower]))

    def contains(self, x, tol: float = ATOL) -> bool:
        x = _vec(x)
        return bool(np.all(self.H @ x <= self.h + tol))

    def contains_many(self, X, tol: float = ATOL) -> np.ndarray:
        """Row-wise membership for points stacked as rows of X."""
        X = np.atleast_2d(X)
        return np.all(X @ self.H.T <= self.h + tol, axis=1)

    def box_bounds(self):
        """(lower, upper) if every row is a signed unit axis vector, else None."""
        n = self.dim
        lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
        for row, off in zip(self.H, self.h):
            nz = np.flatnonzero(row)
            if nz.size != 1:
                return None
            k = nz[0]
            if row[k] > 0:
                hi[k] = min(hi[k], off / row[k])
            else:
                lo[k] = max(lo[k], off / row[k])
        return lo, hi

    def chebyshev_center(self):
        """(center, radius) of the largest inscribed ball; radius < 0 if empty."""
        norms = np.linalg.norm(self.H, axis=1)
        n = self.dim
        c = np.zeros(n + 1)
        c[-1] = -1.0
        A = np.hstack([self.H, norms[:, None]])
        sol = lp.solve_problem(c, A_ub=A, b_ub=self.h,
                               lower=np.r_[np.full(n, -np.inf), -np.inf],
                               upper=np.r_[np.full(n, np.inf), 1e6])
        if sol.status == "infeasible":
            return None, -np.inf
        if sol.status == "unbounded":
            raise SetError("unbounded Chebyshev problem")
        return sol.x[:n], sol.x[n]


@dataclass(frozen=True)
class MatrixZonotope:
    """{C + sum_i b_i G_i : |b|_inf <= 1}; generators stacked as (q, rows, cols)."""

    center: np.ndarray
    generators: np.ndarray = field(default=None)

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.center, dtype=float))
        G = self.generators
        if G is None:
            G = np.zeros((0,) + C.shape)
        G = np.asarray(G, dtype=float)
        if G.size == 0:
            G = G.reshape((0,) + C.shape)
        if G.ndim != 3 or G.shape[1:] != C.shape:
            raise SetError(f"generators must have shape (q, {C.shape[0]}, {C.shape[1]}), got {G.shape}")
        C.setflags(write=False)
        G.setflags(write=False)
        object.__setattr__(self, "center", C)
        object.__setattr__(self, "generators", G)

    @property
    def shape(self):
        return self.center.shape

    @property
    def n_generators(self) -> int:
        return self.generators.shape[0]

    def vectorize(self) -> Zonotope:
        """Column-major vectorization as an ordinary zonotope."""
        c = self.center.reshape(-1, order="F")
        G = self.generators.transpose(0, 2, 1).reshape(self.n_generators, -1).T
        return Zonotope(c, G)

    @classmethod
    def from_vectorized(cls, z: Zonotope, shape) -> "MatrixZonotope":
        C = z.center.reshape(shape, order="F")
        G = np.stack([g.reshape(shape, order="F") for g in z.generators.T]) if z.n_generators else None
        return cls(C, G)


@dataclass(frozen=True)
class VertexModelSet:
    """Finite list of (A, B) pairs stacked as A: (k, n, n), B: (k, n, m)."""

    A: np.ndarray
    B: np.ndarray
    signs: np.ndarray = field(default=None)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 3 or B.ndim != 3 or A.shape[0] == 0 or A.shape[0] != B.shape[0]:
            raise SetError("vertex model set must be a nonempty stack of (A, B) pairs")
        if A.shape[1] != A.shape[2] or B.shape[1] != A.shape[1]:
            raise SetError("inconsistent (A, B) dimensions")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    def __len__(self):
        return self.A.shape[0]

    @property
    def vertices(self):
        return list(zip(self.A, self.B))

    @property
    def AB(self) -> np.ndarray:
        return np.concatenate([self.A, self.B], axis=2)


# ---------------------------------------------------------------------------
# zonotope operations

def _check_dim(n1, n2, what="dimension"):
    if n1 != n2:
        raise SetError(f"{what} mismatch: {n1} vs {n2}")


def minkowski_sum(a: Zonotope, b: Zonotope) -> Zonotope:
    _check_dim(a.dim, b.dim)
    return Zonotope(a.center + b.center, np.hstack([a.generators, b.generators]))


def linear_map(M, z: Zonotope) -> Zonotope:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _check_dim(M.shape[1], z.dim)
    return Zonotope(M @ z.center, M @ z.generators)


def support(z: Zonotope, d) -> float:
    d = _vec(d)
    _check_dim(d.size, z.dim)
    return float(d @ z.center + np.abs(d @ z.generators).sum())


def supports(z: Zonotope, D) -> np.ndarray:
    """Support values for each row of D."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    _check_dim(D.shape[1], z.dim)
    return D @ z.center + np.abs(D @ z.generators).sum(axis=1)


def contains_point(z: Zonotope, x, tol: float = None) -> bool:
    """Membership via the feasibility LP  c + G b = x, |b| <= 1 (closed form in the plane)."""
    x = _vec(x)
    _check_dim(x.size, z.dim)
    r = x - z.center
    p = z.n_generators
    scale = max(1.0, float(np.abs(r).max(initial=0.0)))
    if p == 0:
        return bool(np.all(np.abs(r) <= (lp.TOL_FEAS if tol is None else tol) * scale))
    # quick reject: outside the interval hull
    if np.any(np.abs(r) > np.abs(z.generators).sum(axis=1) + 1e-7 * scale):
        return False
    G = z.generators
    if z.dim == 2 and np.linalg.matrix_rank(G, tol=1e-12 * max(1.0, np.abs(G).max())) == 2:
        # a full 2-D zonotope has facet normals perpendicular to its generators
        N = np.vstack([-G[1], G[0]]).T
        N = N[np.linalg.norm(N, axis=1) > 0]
        N = N / np.linalg.norm(N, axis=1)[:, None]
        slack = (lp.TOL_FEAS if tol is None else tol) * scale
        return bool(np.all(np.abs(N @ r) <= np.abs(N @ G).sum(axis=1) + slack))
    sol = lp.solve_problem(np.zeros(p), A_eq=G, b_eq=r,
                           lower=-np.ones(p), upper=np.ones(p))
    return sol.status == "optimal"


def zonotope_in_hpolytope(z: Zonotope, P: HPolytope, tol: float = None) -> bool:
    _check_dim(z.dim, P.dim)
    tol = lp.TOL_FEAS if tol is None else tol
    return bool(np.all(supports(z, P.H) <= P.h + tol))


def merge_parallel(z: Zonotope, tol: float = 1e-12) -> Zonotope:
    """Same set with parallel generators summed into one."""
    G = z.generators
    if G.shape[1] <= 1:
        return z
    norms = np.linalg.norm(G, axis=0)
    keep = norms > tol
    G, norms = G[:, keep], norms[keep]
    if G.shape[1] == 0:
        return Zonotope(z.center, None)
    U = G / norms
    lead = np.argmax(np.abs(U) > 1e-9, axis=0)
    U = U * np.sign(U[lead, np.arange(U.shape[1])])
    _, inv = np.unique(np.round(U / 1e-9).astype(np.int64), axis=1, return_inverse=True)
    inv = inv.ravel()
    k = inv.max() + 1
    out = np.zeros((z.dim, k))
    for i in range(k):
        sel = inv == i
        out[:, i] = U[:, np.flatnonzero(sel)[0]] * norms[sel].sum()
    return Zonotope(z.center, out)


def reduce_order(z: Zonotope, target: int) -> Zonotope:
    """Keep the largest generators and box the remainder (interval hull)."""
    n = z.dim
    if target < n:
        raise SetError(f"target order {target} below dimension {n}")
    if z.n_generators <= target:
        return z
    G = z.generators
    order = np.argsort(-np.linalg.norm(G, axis=0), kind="stable")
    keep = G[:, order[: target - n]]
    rest = G[:, order[target - n:]]
    box = np.diag(np.abs(rest).sum(axis=1))
    return Zonotope(z.center, np.hstack([keep, box]))


def project(z: Zonotope, idx: Sequence[int]) -> Zonotope:
    idx = [int(i) for i in idx]
    if len(set(idx)) != len(idx):
        raise SetError("projection indices must be distinct")
    if any(i < 0 or i >= z.dim for i in idx):
        raise SetError(f"projection index out of range for dimension {z.dim}")
    return Zonotope(z.center[idx], z.generators[idx, :])


def _unique_directions(D: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Normalize rows and drop rows parallel (or anti-parallel) to earlier ones."""
    out = []
    for d in D:
        nd = np.linalg.norm(d)
        if nd <= 1e-12:
            continue
        d = d / nd
        if any(abs(abs(d @ e) - 1.0) <= tol for e in out):
            continue
        out.append(d)
    return np.array(out).reshape(len(out), D.shape[1])


def _facet_normals(G: np.ndarray) -> np.ndarray:
    n = G.shape[0]
    G = G[:, np.linalg.norm(G, axis=0) > 1e-12]
    rank = np.linalg.matrix_rank(G, tol=1e-10) if G.size else 0
    if n == 1:
        return np.array([[1.0]])
    if rank < n:
        # flat zonotope: normals of its affine hull plus in-hull facet normals
        U, _, _ = np.linalg.svd(G if G.size else np.zeros((n, 1)))
        span, perp = U[:, :rank], U[:, rank:]
        extra = [perp.T]
        if rank >= 1:
            Gs = span.T @ G
            if rank == 1:
                inner = np.array([[1.0]])
            else:
                inner = _facet_normals(Gs)
            extra.append(inner @ span.T)
        return _unique_directions(np.vstack(extra))
    if n == 2:
        normals = np.stack([-G[1], G[0]], axis=1)
    elif n == 3:
        normals = np.array([np.cross(G[:, i], G[:, j])
                            for i, j in itertools.combinations(range(G.shape[1]), 2)])
    else:
        raise SetError("facet enumeration is limited to dimension <= 3")
    return _unique_directions(normals)


def zonotope_to_hpolytope(z: Zonotope) -> HPolytope:
    """Exact halfspace form (dimension <= 3)."""
    if z.dim > 3:
        raise SetError("zonotope_to_hpolytope supports dimension <= 3 only")
    N = _facet_normals(z.generators)
    N = np.vstack([N, -N])
    return HPolytope(N, supports(z, N))


def vertices(z: Zonotope) -> np.ndarray:
    """Vertices of a zonotope of dimension <= 3 (rows). 2-D output is counter-clockwise."""
    zr = z.drop_zero_generators(1e-14)
    n, G = zr.dim, zr.generators
    if G.shape[1] == 0:
        return zr.center[None, :].copy()
    if n == 1:
        r = np.abs(G).sum()
        return np.array([zr.center - r, zr.center + r]).reshape(2, 1)
    if n == 2:
        # canonical generator orientation: upper half-plane, then angular sort
        G = G * np.where((G[1] < 0) | ((G[1] == 0) & (G[0] < 0)), -1.0, 1.0)
        ang = np.arctan2(G[1], G[0])
        G = G[:, np.argsort(ang, kind="stable")]
        start = zr.center - G.sum(axis=1)
        steps = np.hstack([2 * G, -2 * G])
        pts = start + np.vstack([np.zeros(2), np.cumsum(steps.T, axis=0)[:-1]])
        return _dedupe_points(pts)
    if n == 3:
        if G.shape[1] > 14:
            raise SetError("3-D vertex enumeration limited to 14 generators")
        from scipy.spatial import ConvexHull

        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=G.shape[1])))
        pts = zr.center + signs @ G.T
        if np.linalg.matrix_rank(G, tol=1e-10) < 3:
            return _dedupe_points(pts)
        hull = ConvexHull(pts)
        return pts[hull.vertices]
    raise SetError("vertex enumeration limited to dimension <= 3")


def _dedupe_points(P: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    keep = [0]
    for i in range(1, P.shape[0]):
        if np.linalg.norm(P[i] - P[keep[-1]]) > tol:
            keep.append(i)
    if len(keep) > 1 and np.linalg.norm(P[keep[-1]] - P[keep[0]]) <= tol:
        keep.pop()
    return P[keep]


def hpolytope_vertices_2d(P: HPolytope) -> np.ndarray:
    """Vertices of a bounded 2-D polytope, counter-clockwise."""
    if P.dim != 2:
        raise SetError("2-D only")
    H, h = P.H, P.h
    pts = []
    for i, j in itertools.combinations(range(H.shape[0]), 2):
        M = H[[i, j]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, h[[i, j]])
        if np.all(H @ x <= h + 1e-9):
            pts.append(x)
    if not pts:
        return np.zeros((0, 2))
    pts = np.unique(np.round(np.array(pts), 12), axis=0)
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    return pts[np.argsort(ang)]


def polygon_area(V: np.ndarray) -> float:
    """Shoelace area of a counter-clockwise polygon."""
    if V.shape[0] < 3:
        return 0.0
    x, y = V[:, 0], V[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


# ---------------------------------------------------------------------------
# matrix zonotopes

def matzono_times_vector(M: MatrixZonotope, v) -> Zonotope:
    v = _vec(v)
    _check_dim(v.size, M.shape[1])
    return Zonotope(M.center @ v, (M.generators @ v).T)


def reduce_matzono(M: MatrixZonotope, target: int) -> MatrixZonotope:
    """Outer reduction to at most `target` generators in the vectorized space.

    The largest generators are kept; the remainder is enclosed by axis-aligned
    generators on the coordinates it actually moves. Raises if no split fits
    the budget (the remainder would need more box generators than allowed).
    """
    if target < 1:
        raise SetError("target generator count must be >= 1")
    q = M.n_generators
    if q <= target:
        return M
    z = M.vectorize()
    G = z.generators
    order = np.argsort(-np.linalg.norm(G, axis=0), kind="stable")
    for kept in range(target - 1, -1, -1):
        rest = G[:, order[kept:]]
        radius = np.abs(rest).sum(axis=1)
        active = np.flatnonzero(radius > 0)
        if kept + active.size <= target:
            box = np.zeros((G.shape[0], active.size))
            box[active, np.arange(active.size)] = radius[active]
            red = Zonotope(z.center, np.hstack([G[:, order[:kept]], box]))
            return MatrixZonotope.from_vectorized(red, M.shape)
    raise SetError(
        f"cannot enclose {q} matrix generators with {target}: the generator span "
        f"needs at least {np.linalg.matrix_rank(G)} generators")


def enumerate_vertices(M: MatrixZonotope, n_state: int, max_bits: int = None) -> VertexModelSet:
    """All sign combinations C + sum s_i G_i, split into (A, B) blocks."""
    max_bits = MAX_VERTEX_BITS if max_bits is None else max_bits
    q = M.n_generators
    if q > max_bits:
        raise SetError(f"{q} generators exceed the vertex cap of {max_bits}; reduce the matrix zonotope first")
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=q))).reshape(2 ** q, q)
    V = M.center[None] + np.einsum("kq,qij->kij", signs, M.generators)
    return VertexModelSet(V[:, :, :n_state], V[:, :, n_state:], signs)


def contains_matrix(M: MatrixZonotope, X) -> bool:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape != M.shape:
        raise SetError(f"matrix shape {X.shape} differs from {M.shape}")
    return contains_point(M.vectorize(), X.reshape(-1, order="F"))


# ---------------------------------------------------------------------------
# inner approximation

def default_template(P: HPolytope, extra=None, cap: int = None, tol: float = 1e-6) -> np.ndarray:
    """Axis directions, optional extra directions, then facet normals.

    Facet normals are ordered by the distance of their hyperplane from the
    Chebyshev center, tightest first. Rows are unit vectors.
    """
    n = P.dim
    parts = [np.eye(n)]
    if extra is not None and len(extra):
        parts.append(np.atleast_2d(extra))
    c, _ = P.chebyshev_center()
    norms = np.linalg.norm(P.H, axis=1)
    slack = (P.h - P.H @ (c if c is not None else np.zeros(n))) / np.where(norms > 0, norms, 1.0)
    parts.append(P.H[np.argsort(slack, kind="stable")])
    T = _unique_directions(np.vstack(parts), tol)
    if cap is not None:
        T = T[:cap]
    return T


def inner_zonotope(P: HPolytope, template=None, weights=None, groups=None) -> Zonotope:
    """Largest (weighted sum of scalings) zonotope with template generator directions inside P.

    `groups` (g x k, nonnegative) adds a first stage: maximize t subject to
    groups @ s >= t, then maximize the weighted sum with that floor kept.
    This stops the sum objective from collapsing onto a few directions.
    """
    n = P.dim
    c0, radius = P.chebyshev_center()
    if c0 is None or radius < 0:
        raise SetError("polytope is empty")
    T = default_template(P) if template is None else np.atleast_2d(np.asarray(template, dtype=float))
    if T.shape[1] != n:
        raise SetError("template directions have the wrong dimension")
    if np.linalg.matrix_rank(T, tol=1e-9) < n:
        raise SetError("template directions do not span the space")
    k = T.shape[0]
    w = np.ones(k) if weights is None else _vec(weights)
    A = np.hstack([P.H, np.abs(P.H @ T.T)])
    free = np.full(n, -np.inf)
    A_floor = np.zeros((0, n + k))
    b_floor = np.zeros(0)
    if groups is not None:
        Mg = np.atleast_2d(np.asarray(groups, dtype=float))
        if Mg.shape[1] != k or np.any(Mg < 0) or not np.all(Mg.any(axis=1)):
            raise SetError("groups must be nonnegative with one column per direction")
        g = Mg.shape[0]
        # variables (c, s, t): maximize t with groups @ s >= t
        A1 = np.vstack([np.hstack([A, np.zeros((A.shape[0], 1))]),
                        np.hstack([np.zeros((g, n)), -Mg, np.ones((g, 1))])])
        cost1 = np.zeros(n + k + 1)
        cost1[-1] = -1.0
        sol = lp.solve_problem(cost1, A_ub=A1, b_ub=np.r_[P.h, np.zeros(g)],
                               lower=np.r_[free, np.zeros(k + 1)], upper=np.full(n + k + 1, np.inf))
        if sol.status != "optimal":
            raise SetError(f"inner approximation LP {sol.status}")
        t = max(sol.x[-1], 0.0) * (1 - 1e-9)
        A_floor = np.hstack([np.zeros((g, n)), -Mg])
        b_floor = np.full(g, -t)
    cost = np.concatenate([np.zeros(n), -w])
    sol = lp.solve_problem(cost, A_ub=np.vstack([A, A_floor]), b_ub=np.r_[P.h, b_floor],
                           lower=np.r_[free, np.zeros(k)], upper=np.full(n + k, np.inf))
    if sol.status != "optimal":
        raise SetError(f"inner approximation LP {sol.status}")
    c, s = sol.x[:n], np.maximum(sol.x[n:], 0.0)
    return Zonotope(c, (T * s[:, None]).T).drop_zero_generators(1e-12)

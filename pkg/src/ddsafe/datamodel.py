"""Input-state data and the matrix zonotope of data-consistent models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .setops import (MatrixZonotope, VertexModelSet, Zonotope, contains_point,
                     enumerate_vertices, reduce_matzono)

RANK_TOL = 1e-10
PINV_RESIDUAL_TOL = 1e-8


class DataError(ValueError):
    pass


@dataclass
class TrajectorySet:
    """Trajectories as (inputs m x Ns, states n x (Ns + 1)) pairs."""

    trajectories: List[Tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        if not self.trajectories:
            raise DataError("empty trajectory set")
        clean = []
        dims = None
        for i, (U, X) in enumerate(self.trajectories):
            U = np.atleast_2d(np.asarray(U, dtype=float))
            X = np.atleast_2d(np.asarray(X, dtype=float))
            if X.shape[1] != U.shape[1] + 1:
                raise DataError(f"trajectory {i}: {X.shape[1]} states for {U.shape[1]} inputs "
                                "(expected one more state than inputs)")
            if dims is None:
                dims = (X.shape[0], U.shape[0])
            elif dims != (X.shape[0], U.shape[0]):
                raise DataError(f"trajectory {i}: dimensions {(X.shape[0], U.shape[0])} differ from {dims}")
            clean.append((U, X))
        self.trajectories = clean

    @property
    def n(self) -> int:
        return self.trajectories[0][1].shape[0]

    @property
    def m(self) -> int:
        return self.trajectories[0][0].shape[0]


@dataclass(frozen=True)
class DataMatrices:
    X_minus: np.ndarray
    U_minus: np.ndarray
    X_plus: np.ndarray

    @property
    def T(self) -> int:
        return self.X_minus.shape[1]

    @property
    def n(self) -> int:
        return self.X_minus.shape[0]

    @property
    def m(self) -> int:
        return self.U_minus.shape[0]

    @property
    def regressor(self) -> np.ndarray:
        return np.vstack([self.X_minus, self.U_minus])


@dataclass
class ModelSet:
    """Matrix zonotope over [A, B]; optional reduced copy and its vertices."""

    mz: MatrixZonotope
    n: int
    m: int
    reduced: Optional[MatrixZonotope] = None
    vertices: Optional[VertexModelSet] = None

    def __post_init__(self):
        if self.mz.shape != (self.n, self.n + self.m):
            raise DataError(f"model set shape {self.mz.shape} does not match n={self.n}, m={self.m}")

    @property
    def A_center(self) -> np.ndarray:
        return self.mz.center[:, : self.n]

    @property
    def B_center(self) -> np.ndarray:
        return self.mz.center[:, self.n:]

    def with_vertices(self, budget: int, max_bits: int = None) -> "ModelSet":
        red = reduce_matzono(self.mz, budget)
        verts = enumerate_vertices(red, self.n, max_bits)
        return ModelSet(self.mz, self.n, self.m, red, verts)


def stack(data: TrajectorySet) -> DataMatrices:
    Xm = np.hstack([X[:, :-1] for _, X in data.trajectories])
    Xp = np.hstack([X[:, 1:] for _, X in data.trajectories])
    Um = np.hstack([U for U, _ in data.trajectories])
    return DataMatrices(Xm, Um, Xp)


def rank_ok(d: DataMatrices, rank_tol: float = RANK_TOL) -> bool:
    """Full row rank of [X-; U-] with a relative singular-value threshold."""
    k = d.n + d.m
    if d.T < k:
        return False
    s = np.linalg.svd(d.regressor, compute_uv=False)
    if s[0] == 0.0:
        return False
    return bool(s[k - 1] > rank_tol * s[0])


def right_pinv(M: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """SVD-based pseudo-inverse with a relative cutoff."""
    return np.linalg.pinv(M, rcond=rank_tol)


def noise_matrix_zonotope(w: Zonotope, T: int) -> MatrixZonotope:
    """T-fold concatenation of the disturbance zonotope as an n x T matrix zonotope.

    Generator index j + i*T (0-based) carries the i-th disturbance generator in column j.
    """
    if T < 1:
        raise DataError("T must be positive")
    n, q = w.dim, w.n_generators
    C = np.tile(w.center[:, None], (1, T))
    G = np.zeros((q * T, n, T))
    for i in range(q):
        for j in range(T):
            G[j + i * T, :, j] = w.generators[:, i]
    return MatrixZonotope(C, G)


def build_model_set(d: DataMatrices, w: Zonotope) -> ModelSet:
    """(X+ - M_w) [X-; U-]^dagger as a matrix zonotope."""
    if not rank_ok(d):
        raise DataError("data matrix [X-; U-] is not full row rank; collect richer data")
    D = d.regressor
    P = right_pinv(D)
    resid = np.abs(D @ P - np.eye(D.shape[0])).max()
    if resid > PINV_RESIDUAL_TOL:
        raise DataError(f"pseudo-inverse residual {resid:.2e} exceeds {PINV_RESIDUAL_TOL:.0e}")
    T = d.T
    center = (d.X_plus - np.tile(w.center[:, None], (1, T))) @ P
    # generator (i, j) = g_i e_j^T P = outer(g_i, P[j]); the sign is irrelevant
    g = w.generators.T  # (q, n)
    G = np.einsum("qa,jb->qjab", g, P).reshape(-1, d.n, d.n + d.m)
    return ModelSet(MatrixZonotope(center, G), d.n, d.m)


def contains_model(ms: ModelSet, A, B) -> bool:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != (ms.n, ms.n) or B.shape != (ms.n, ms.m):
        raise DataError("A/B shapes do not match the model set")
    AB = np.hstack([A, B])
    return contains_point(ms.mz.vectorize(), AB.reshape(-1, order="F"))

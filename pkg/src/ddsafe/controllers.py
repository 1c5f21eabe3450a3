"""Networked tracking controller: LQR on the center model with input saturation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import ModelSet, right_pinv
from .setops import HPolytope
from .stc import lqr_gain


class ControllerError(ValueError):
    pass


@dataclass(frozen=True)
class TrackingController:
    """u = sat(u_r + K (x - x_r)) with (x_r, u_r) the center-model equilibrium for r."""

    gain: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    u_set: HPolytope

    def __post_init__(self):
        box = self.u_set.box_bounds()
        if box is None:
            raise ControllerError("saturation needs a box-shaped input set")
        m, n = np.shape(self.gain)
        if self.A_hat.shape != (n, n) or self.B_hat.shape != (n, m):
            raise ControllerError("gain and model shapes disagree")
        object.__setattr__(self, "_lo", box[0])
        object.__setattr__(self, "_hi", box[1])
        object.__setattr__(self, "_Bpinv", right_pinv(self.B_hat))

    def reference(self, r):
        """Equilibrium pair (x_r, u_r): x_r = r, u_r least-squares solution of B u = (I - A) r."""
        r = np.asarray(r, dtype=float).ravel()
        n = self.A_hat.shape[0]
        return r, self._Bpinv @ ((np.eye(n) - self.A_hat) @ r)

    def saturate(self, u) -> np.ndarray:
        return np.clip(u, self._lo, self._hi)

    def __call__(self, x_received, r) -> np.ndarray:
        return track(self, x_received, r)


def track(c: TrackingController, x_received, r) -> np.ndarray:
    x_r, u_r = c.reference(r)
    x = np.asarray(x_received, dtype=float).ravel()
    return c.saturate(u_r + c.gain @ (x - x_r))


def design_tracking(ms: ModelSet, u_set: HPolytope, Q=None, R=None) -> TrackingController:
    A, B = ms.A_center, ms.B_center
    return TrackingController(lqr_gain(A, B, Q, R), A, B, u_set)

"""Open-loop state estimator with a certified error tube.

Between ground updates the estimate x_hat flows on the nominal model (known
thrust included, disturbance excluded) while the scalar radii
rho = (rho_r, rho_v) flow on the linear comparison system of module
`uncertainty`, so that

    ||r - r_hat|| <= rho_r,   ||v - v_hat|| <= rho_v

holds whenever it held at the start of the flow and the model constants
bound reality.  Ground measurements replace the whole bundle when their own
claimed radii are consistent with the running tube; impulses shift v_hat and
charge the worst-case execution error to rho_v.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import gravity, rk4_flow
from .uncertainty import UncertaintyConfig, flow_operators


@dataclass
class Estimate:
    """Estimator state: mean (r_hat, v_hat) plus error radii (rho_r, rho_v)."""

    x_hat: np.ndarray  # stacked (r_hat, v_hat), shape (2n,)
    rho: np.ndarray  # (rho_r, rho_v)

    @property
    def dim(self) -> int:
        return self.x_hat.shape[0] // 2

    @property
    def r_hat(self) -> np.ndarray:
        return self.x_hat[: self.dim]

    @property
    def v_hat(self) -> np.ndarray:
        return self.x_hat[self.dim:]

    def copy(self) -> "Estimate":
        return Estimate(self.x_hat.copy(), self.rho.copy())


def measurement_consistent(
    est: Estimate, x_bar: np.ndarray, rho_bar: np.ndarray
) -> bool:
    """Accept a ground update only if its claimed ball fits inside the
    running tube: ||r_bar - r_hat|| + rho_bar_r <= rho_r and likewise for
    velocity.  A truthful station always passes; an inconsistent claim is
    rejected and the estimator keeps flying open loop."""
    n = est.dim
    dr = float(np.linalg.norm(x_bar[:n] - est.x_hat[:n]))
    dv = float(np.linalg.norm(x_bar[n:] - est.x_hat[n:]))
    return dr + rho_bar[0] <= est.rho[0] and dv + rho_bar[1] <= est.rho[1]


class Observer:
    """Flows, measurement jumps, and impulse jumps for the estimate bundle."""

    def __init__(self, est: Estimate, unc: UncertaintyConfig, mu: float):
        self.est = est
        self.unc = unc
        self.mu = mu

    def flow(
        self,
        t: float,
        dt: float,
        dt_max: float,
        u_cont: np.ndarray | None = None,
    ) -> None:
        """Advance the bundle by dt.  `u_cont` is a continuous thrust held
        constant over the interval (its execution error enlarges the tube
        drive); impulsive scenarios pass None and thrust enters only through
        jump().
        """
        if dt == 0.0:
            return
        n = self.est.dim
        if u_cont is None:

            def rhs(s, x):
                return np.concatenate([x[n:], gravity(x[:n], self.mu)])

            drive = self.unc.w_c
        else:
            uc = np.asarray(u_cont, dtype=float)

            def rhs(s, x):
                return np.concatenate([x[n:], gravity(x[:n], self.mu) + uc])

            drive = self.unc.w_c + self.unc.w_g(float(np.linalg.norm(uc)))

        self.est.x_hat = rk4_flow(rhs, t, self.est.x_hat, dt, dt_max)
        E, Phi = flow_operators(self.unc.l_fr, self.unc.l_fv, dt)
        self.est.rho = E @ self.est.rho + drive * Phi[:, 1]

    def measurement_jump(
        self, x_bar: np.ndarray, rho_bar: np.ndarray
    ) -> bool:
        """Adopt (x_bar, rho_bar) if consistent; returns acceptance."""
        if measurement_consistent(self.est, x_bar, rho_bar):
            self.est.x_hat = np.asarray(x_bar, dtype=float).copy()
            self.est.rho = np.asarray(rho_bar, dtype=float).copy()
            return True
        return False

    def impulse_jump(self, u: np.ndarray) -> None:
        """v_hat += u; the execution error bound w_g(||u||) is added to
        rho_v (position radius is continuous across an impulse)."""
        n = self.est.dim
        self.est.x_hat[n:] += u
        self.est.rho[1] += self.unc.w_g(float(np.linalg.norm(u)))


def bootstrap_estimate(
    x_bar: np.ndarray, rho_bar: np.ndarray
) -> Estimate:
    """Initial measurement instant: adopt the first ground fix outright
    (there is no prior tube to check against)."""
    return Estimate(
        np.asarray(x_bar, dtype=float).copy(),
        np.asarray(rho_bar, dtype=float).copy(),
    )

"""Barrier families, estimate-robust values, certified prediction bounds.

A family is a scalar constraint h(t, x) whose nonpositive sublevel set must
stay invariant.  Two kinds are shipped:

    ExclusionZone   h = R_o - ||r - c(t)||          keep-out ball
    Halfspace       h = p.(r - c(t)) - rho_off + gamma p.(v - c'(t))

with c(t) a ballistic (Kepler) center, optional for halfspaces.  Every
family carries a constant Lipschitz profile (l_hr, l_hv) bounding its
sensitivity to position/velocity error, so

    h(t, x_true) <= h_hat := h(t, x_hat) + l_hr rho_r + l_hv rho_v

whenever the estimate is sound.

psi_h is a certified upper bound on max_{s in [t, tau]} h(s, p(s)) along the
ballistic prediction p from x_hat.  h, a rate bound, and an acceleration
bound are sampled exactly at grid points; each gap is closed with a chained
chord bound (midpoint of sampled values plus half-gap times the next
derivative's interval bound), with only the derivative one past the sampled
acceleration capped by configuration.  Sound for smooth h along the
prediction as long as that cap holds on the interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    KeplerOrbit,
    ballistic_rhs,
    gravity,
    gravity_rate,
    integrate_to_grid,
)


class ZoneSingularityError(RuntimeError):
    """Raised when a state coincides with an exclusion-zone center; the
    gradient is undefined there and the run must be treated as unsafe."""


_SING_TOL = 1e-6  # meters


@dataclass(frozen=True)
class PsiConfig:
    """Prediction-bound parameters.

    delta_grid : grid step (s) for the sampled max.
    a_rel_cap : additive pad (m/s^2 scale) on the acceleration samples the
        families report; 0 when those samples are exact, which they are for
        the bundled family kinds.
    j_rel_cap : cap on the derivative one past the sampled acceleration
        data, uniform over the scenario's families.  For keep-out balls this
        is the relative ballistic jerk ||d/ds (g(r) - g(c))||; for moving
        halfspaces it is |d^3 h/ds^3|.  Must hold along every prediction the
        scenario evaluates; validated against dense sweeps in tests.
    rtol, atol : prediction integrator tolerances.
    """

    delta_grid: float
    a_rel_cap: float = 0.0
    j_rel_cap: float = 0.0
    rtol: float = 1e-10
    atol: float = 1e-9


class ExclusionZone:
    """Moving keep-out ball of radius R_o around a ballistic center."""

    kind = "ExclusionZone"

    def __init__(self, R_o: float, orbit: KeplerOrbit, name: str = ""):
        self.R_o = R_o
        self.orbit = orbit
        self.name = name

    def lip(self) -> tuple[float, float]:
        # the distance-to-center map is 1-Lipschitz in r, constant in v
        return (1.0, 0.0)

    def value(self, t: float, x: np.ndarray) -> float:
        n = x.shape[-1] // 2
        c, _ = self.orbit.state(t, n)
        d = float(np.linalg.norm(x[:n] - c))
        if d < _SING_TOL:
            raise ZoneSingularityError(
                f"state at zone center {self.name or id(self)}"
            )
        return self.R_o - d

    def grads(
        self, t: float, x: np.ndarray
    ) -> tuple[float, np.ndarray, np.ndarray]:
        n = x.shape[-1] // 2
        c, cdot = self.orbit.state(t, n)
        rel = x[:n] - c
        d = float(np.linalg.norm(rel))
        if d < _SING_TOL:
            raise ZoneSingularityError(
                f"state at zone center {self.name or id(self)}"
            )
        dh_dr = -rel / d
        dh_dt = float(rel @ cdot) / d
        return dh_dt, dh_dr, np.zeros(n)

    def h_rate_acc(
        self, ts: np.ndarray, traj: np.ndarray, mu: float
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """h plus sound rate/acceleration data at each grid state.

        traj has shape (npts, m, 2n); returns three (npts, m) arrays.  The
        chord chain for a keep-out ball runs on vector norms: ||r - c|| is
        1-Lipschitz in the relative position, so rate = ||v - c'|| and
        acc = ||g(r) - g(c)|| close the first two levels exactly, and the
        configured cap only has to bound the relative jerk.
        """
        n = traj.shape[-1] // 2
        C, Cdot = self.orbit.states(ts, n)
        rel = traj[..., :n] - C[:, None, :]
        d = np.linalg.norm(rel, axis=-1)
        if float(d.min()) < _SING_TOL:
            raise ZoneSingularityError(
                f"predicted state at zone center {self.name or id(self)}"
            )
        relv = traj[..., n:] - Cdot[:, None, :]
        rela = gravity(traj[..., :n], self.orbit.mu) - gravity(
            C, self.orbit.mu
        )[:, None, :]
        return (
            self.R_o - d,
            np.linalg.norm(relv, axis=-1),
            np.linalg.norm(rela, axis=-1),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.name,
            "R_o": self.R_o,
            "orbit": _orbit_to_dict(self.orbit),
        }


class Halfspace:
    """h = p.(r - c) - rho_off + gamma p.(v - c'), optionally centered on a
    ballistic orbit (c = 0 when no orbit is given)."""

    kind = "Halfspace"

    def __init__(
        self,
        p: np.ndarray,
        rho_off: float,
        gamma: float,
        orbit: KeplerOrbit | None = None,
        name: str = "",
    ):
        self.p = np.asarray(p, dtype=float)
        self.p = self.p / np.linalg.norm(self.p)
        self.rho_off = rho_off
        self.gamma = gamma
        self.orbit = orbit
        self.name = name

    def lip(self) -> tuple[float, float]:
        return (1.0, self.gamma)

    def _center(self, t: float, n: int):
        if self.orbit is None:
            z = np.zeros(n)
            return z, z, z
        c, cdot = self.orbit.state(t, n)
        return c, cdot, gravity(c, self.orbit.mu)

    def value(self, t: float, x: np.ndarray) -> float:
        n = x.shape[-1] // 2
        c, cdot, _ = self._center(t, n)
        return float(
            self.p @ (x[:n] - c)
            - self.rho_off
            + self.gamma * (self.p @ (x[n:] - cdot))
        )

    def grads(
        self, t: float, x: np.ndarray
    ) -> tuple[float, np.ndarray, np.ndarray]:
        n = x.shape[-1] // 2
        _, cdot, cddot = self._center(t, n)
        dh_dt = float(-self.p @ cdot - self.gamma * (self.p @ cddot))
        return dh_dt, self.p.copy(), self.gamma * self.p

    def h_rate_acc(
        self, ts: np.ndarray, traj: np.ndarray, mu: float
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Exact |dh/ds| and |d2h/ds2| at the grid states.

        dh/ds  = p.(v - c') + gamma p.(g(r) - c'')
        d2h/ds2 = p.(g(r) - c'') + gamma p.(dg(r)/ds - c''')

        and dg(r)/ds along a ballistic arc is gravity_rate(r, v).  The
        configured cap only has to bound |d3h/ds3|.
        """
        n = traj.shape[-1] // 2
        mu_eff = self.orbit.mu if self.orbit is not None else mu
        r = traj[..., :n]
        v = traj[..., n:]
        if self.orbit is None:
            rel_r, rel_v = r, v
            rel_a = gravity(r, mu_eff)
            rel_j = gravity_rate(r, v, mu_eff)
        else:
            C, Cdot = self.orbit.states(ts, n)
            rel_r = r - C[:, None, :]
            rel_v = v - Cdot[:, None, :]
            rel_a = gravity(r, mu_eff) - gravity(C, mu_eff)[:, None, :]
            rel_j = gravity_rate(r, v, mu_eff) - gravity_rate(
                C, Cdot, mu_eff
            )[:, None, :]
        h = rel_r @ self.p - self.rho_off + self.gamma * (rel_v @ self.p)
        rate = np.abs(rel_v @ self.p + self.gamma * (rel_a @ self.p))
        acc = np.abs(rel_a @ self.p + self.gamma * (rel_j @ self.p))
        return h, rate, acc

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "name": self.name,
            "p": list(self.p),
            "rho_off": self.rho_off,
            "gamma": self.gamma,
        }
        if self.orbit is not None:
            d["orbit"] = _orbit_to_dict(self.orbit)
        return d


def _orbit_to_dict(o: KeplerOrbit) -> dict:
    return {
        "a": o.a,
        "e": o.e,
        "argp": o.argp,
        "epoch_M0": o.epoch_M0,
        "incl": o.incl,
        "raan": o.raan,
        "mu": o.mu,
    }


def orbit_from_dict(d: dict) -> KeplerOrbit:
    return KeplerOrbit(
        a=d["a"],
        e=d["e"],
        argp=d["argp"],
        epoch_M0=d["epoch_M0"],
        incl=d.get("incl", 0.0),
        raan=d.get("raan", 0.0),
        mu=d["mu"],
    )


def family_from_dict(d: dict) -> ExclusionZone | Halfspace:
    if d["kind"] == "ExclusionZone":
        return ExclusionZone(
            R_o=d["R_o"], orbit=orbit_from_dict(d["orbit"]), name=d.get("name", "")
        )
    if d["kind"] == "Halfspace":
        orbit = orbit_from_dict(d["orbit"]) if "orbit" in d else None
        return Halfspace(
            p=np.array(d["p"], dtype=float),
            rho_off=d["rho_off"],
            gamma=d["gamma"],
            orbit=orbit,
            name=d.get("name", ""),
        )
    raise ValueError(f"barrier kind {d.get('kind')!r} not recognized")


def h_hat(family, t: float, x_hat: np.ndarray, rho: np.ndarray) -> float:
    """Estimate-robust barrier value h + l_hr rho_r + l_hv rho_v."""
    l_hr, l_hv = family.lip()
    return family.value(t, x_hat) + l_hr * rho[0] + l_hv * rho[1]


def h_hat_all(families, t, x_hat, rho) -> np.ndarray:
    return np.array([h_hat(f, t, x_hat, rho) for f in families])


# ---------------------------------------------------------------------------
# Certified prediction bound


def prediction_grid(delta: float, psi: PsiConfig) -> np.ndarray:
    """Grid offsets [0, delta] with spacing <= psi.delta_grid, >= 2 points.

    The first coarse interval is subdivided by powers of two.  The chord
    bound concedes (D/2)x(relative speed) inside each gap, and the gap
    containing s = 0 is the one that decides whether a state close to a
    boundary but moving away can be certified at all, so it gets spacing
    D/8 while the rest of the horizon keeps D.
    """
    if delta < 0:
        raise ValueError("prediction horizon must be >= 0")
    if delta == 0.0:
        return np.array([0.0])
    npts = max(2, int(math.ceil(delta / psi.delta_grid - 1e-12)) + 1)
    coarse = np.linspace(0.0, delta, npts)
    front = coarse[1] * np.array([0.125, 0.25, 0.5])
    return np.concatenate([[coarse[0]], front, coarse[1:]])


def predict_states(
    mu: float,
    t: float,
    X: np.ndarray,
    offsets: np.ndarray,
    psi: PsiConfig,
) -> np.ndarray:
    """Ballistic prediction of one or a stack of states to t + offsets.

    X is (2n,) or (m, 2n); the result is (len(offsets),) + X.shape.
    """

    def rhs(s, x):
        return ballistic_rhs(s, x, mu)

    return integrate_to_grid(
        rhs, t, X, t + offsets, rtol=psi.rtol, atol=psi.atol
    )


def psi_from_samples(
    h: np.ndarray,
    rate: np.ndarray,
    acc: np.ndarray,
    spacings: np.ndarray,
    a_pad: float,
    jerk_cap: float,
) -> np.ndarray:
    """Chained chord bound over the sampled trajectory values.

    On each gap of width D, a quantity whose derivative is bounded by Q
    satisfies f(s) <= min(f_k + Q(s - s_k), f_k+1 + Q(s_k+1 - s)), whose
    max is the midpoint value (f_k + f_k+1)/2 + Q D/2.  Applying this three
    times, per interval:

        A_k = (acc_k + acc_k+1)/2 + a_pad + (D/2) jerk_cap
        B_k = (rate_k + rate_k+1)/2 + (D/2) A_k
        h   <= (h_k + h_k+1)/2 + (D/2) B_k  on the gap

    h, rate, acc are (npts, m); spacings is (npts - 1,); returns (m,).
    """
    if h.shape[0] == 1:
        return h[0]
    half = 0.5 * np.asarray(spacings)[:, None]
    A = 0.5 * (acc[:-1] + acc[1:]) + a_pad + half * jerk_cap
    B = 0.5 * (rate[:-1] + rate[1:]) + half * A
    mids = 0.5 * (h[:-1] + h[1:]) + half * B
    return np.maximum(h.max(axis=0), mids.max(axis=0))


def psi_h_batch(
    family,
    t: float,
    offsets: np.ndarray,
    traj: np.ndarray,
    psi: PsiConfig,
    mu: float,
) -> np.ndarray:
    """psi for a stack of predicted trajectories sharing a grid.

    traj: (npts, m, 2n) as produced by predict_states on stacked states.
    """
    h, rate, acc = family.h_rate_acc(t + offsets, traj, mu)
    if len(offsets) == 1:
        return h[0]
    return psi_from_samples(
        h, rate, acc, np.diff(offsets), psi.a_rel_cap, psi.j_rel_cap
    )


def psi_h(
    family,
    tau: float,
    t: float,
    x_hat: np.ndarray,
    psi: PsiConfig,
    mu: float,
) -> float:
    """Sound upper bound on max_{s in [t, tau]} h(s, p(s, t, x_hat))."""
    if tau < t:
        raise ValueError("psi_h: tau must be >= t")
    offsets = prediction_grid(tau - t, psi)
    traj = predict_states(mu, t, x_hat[None, :], offsets, psi)
    return float(psi_h_batch(family, t, offsets, traj, psi, mu)[0])

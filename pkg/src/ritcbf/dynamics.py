"""Orbital dynamics, reference orbits, integrators, disturbance models.

State convention throughout: x = (r, v) stacked, r and v of dimension n
(2 for planar problems, 3 otherwise).  All quantities SI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MU_EARTH = 3.986004418e14  # m^3/s^2


def gravity(r: np.ndarray, mu: float = MU_EARTH) -> np.ndarray:
    """Inverse-square acceleration; broadcasts over leading axes."""
    r = np.asarray(r, dtype=float)
    nrm = np.linalg.norm(r, axis=-1, keepdims=True)
    return -mu * r / nrm**3


def gravity_rate(
    r: np.ndarray, v: np.ndarray, mu: float = MU_EARTH
) -> np.ndarray:
    """d/dt g(r(t)) along a trajectory with velocity v (the jerk of a
    ballistic arc); broadcasts over leading axes."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(r, axis=-1, keepdims=True)
    rv = np.sum(r * v, axis=-1, keepdims=True)
    return -mu * (v / nrm**3 - 3.0 * rv * r / nrm**5)


def ballistic_rhs(t: float, x: np.ndarray, mu: float = MU_EARTH) -> np.ndarray:
    """d/dt (r, v) = (v, g(r)); x may be (..., 2n)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] // 2
    r, v = x[..., :n], x[..., n:]
    return np.concatenate([v, gravity(r, mu)], axis=-1)


# ---------------------------------------------------------------------------
# Kepler reference orbits


def solve_kepler(M: float, e: float, tol: float = 1e-14) -> float:
    """Eccentric anomaly from mean anomaly, Newton iteration."""
    M = math.fmod(M, 2.0 * math.pi)
    E = M if e < 0.8 else math.pi
    for _ in range(64):
        f = E - e * math.sin(E) - M
        E -= f / (1.0 - e * math.cos(E))
        if abs(f) < tol:
            break
    return E


def solve_kepler_vec(M: np.ndarray, e: float, tol: float = 1e-13) -> np.ndarray:
    """Vectorized Newton solve of E - e sin E = M."""
    M = np.mod(np.asarray(M, dtype=float), 2.0 * math.pi)
    E = M.copy() if e < 0.8 else np.full_like(M, math.pi)
    for _ in range(64):
        f = E - e * np.sin(E) - M
        E = E - f / (1.0 - e * np.cos(E))
        if float(np.max(np.abs(f))) < tol:
            break
    return E


@dataclass(frozen=True)
class KeplerOrbit:
    """Closed reference orbit, planar (dim 2) or inclined (dim 3).

    Angles in radians; epoch_M0 is the mean anomaly at t = 0.  For dim 2 the
    orbit lives in the x-y plane and incl/raan must be zero.
    """

    a: float
    e: float
    argp: float
    epoch_M0: float
    incl: float = 0.0
    raan: float = 0.0
    mu: float = MU_EARTH

    @property
    def mean_motion(self) -> float:
        return math.sqrt(self.mu / self.a**3)

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.mean_motion

    def state(self, t: float, dim: int) -> tuple[np.ndarray, np.ndarray]:
        """Position and velocity at time t in the inertial frame."""
        E = solve_kepler(self.epoch_M0 + self.mean_motion * t, self.e)
        cE, sE = math.cos(E), math.sin(E)
        b = math.sqrt(1.0 - self.e * self.e)
        r_pf = np.array([self.a * (cE - self.e), self.a * b * sE])
        rnorm = self.a * (1.0 - self.e * cE)
        vscale = math.sqrt(self.mu * self.a) / rnorm
        v_pf = vscale * np.array([-sE, b * cE])
        if dim == 2:
            if self.incl != 0.0 or self.raan != 0.0:
                raise ValueError("planar state requested from inclined orbit")
            c, s = math.cos(self.argp), math.sin(self.argp)
            R = np.array([[c, -s], [s, c]])
            return R @ r_pf, R @ v_pf
        R = _perifocal_to_inertial(self.raan, self.incl, self.argp)
        r3 = R @ np.array([r_pf[0], r_pf[1], 0.0])
        v3 = R @ np.array([v_pf[0], v_pf[1], 0.0])
        return r3, v3

    def accel(self, t: float, dim: int) -> np.ndarray:
        r, _ = self.state(t, dim)
        return gravity(r, self.mu)

    def states(self, ts: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
        """Positions and velocities at an array of times, shapes (len(ts), dim)."""
        ts = np.asarray(ts, dtype=float)
        E = solve_kepler_vec(self.epoch_M0 + self.mean_motion * ts, self.e)
        cE, sE = np.cos(E), np.sin(E)
        b = math.sqrt(1.0 - self.e * self.e)
        r_pf = np.stack([self.a * (cE - self.e), self.a * b * sE], axis=-1)
        rnorm = self.a * (1.0 - self.e * cE)
        vscale = math.sqrt(self.mu * self.a) / rnorm
        v_pf = vscale[:, None] * np.stack([-sE, b * cE], axis=-1)
        if dim == 2:
            if self.incl != 0.0 or self.raan != 0.0:
                raise ValueError("planar state requested from inclined orbit")
            c, s = math.cos(self.argp), math.sin(self.argp)
            R = np.array([[c, -s], [s, c]])
            return r_pf @ R.T, v_pf @ R.T
        R = _perifocal_to_inertial(self.raan, self.incl, self.argp)
        pad = np.zeros((len(ts), 1))
        r3 = np.concatenate([r_pf, pad], axis=-1) @ R.T
        v3 = np.concatenate([v_pf, pad], axis=-1) @ R.T
        return r3, v3


def _perifocal_to_inertial(raan: float, incl: float, argp: float) -> np.ndarray:
    cO, sO = math.cos(raan), math.sin(raan)
    ci, si = math.cos(incl), math.sin(incl)
    cw, sw = math.cos(argp), math.sin(argp)
    return np.array(
        [
            [cO * cw - sO * sw * ci, -cO * sw - sO * cw * ci, sO * si],
            [sO * cw + cO * sw * ci, -sO * sw + cO * cw * ci, -cO * si],
            [sw * si, cw * si, ci],
        ]
    )


def orbit_from_state(
    r: np.ndarray, v: np.ndarray, t: float, mu: float = MU_EARTH
) -> KeplerOrbit:
    """Fit a planar KeplerOrbit through the 2-d state (r, v) at time t.

    Only bound, noncircular-enough orbits are supported (e in (1e-12, 1)),
    which covers every reference orbit used here.
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    rn = float(np.linalg.norm(r))
    v2 = float(v @ v)
    energy = 0.5 * v2 - mu / rn
    if energy >= 0:
        raise ValueError("orbit_from_state: state is not bound")
    a = -mu / (2.0 * energy)
    rdotv = float(r @ v)
    evec = ((v2 - mu / rn) * r - rdotv * v) / mu
    e = float(np.linalg.norm(evec))
    if e <= 1e-12 or e >= 1.0:
        raise ValueError(f"orbit_from_state: unsupported eccentricity {e}")
    argp = math.atan2(evec[1], evec[0])
    # true anomaly, then eccentric, then mean at epoch
    cos_nu = float(evec @ r) / (e * rn)
    cos_nu = min(1.0, max(-1.0, cos_nu))
    nu = math.acos(cos_nu)
    if rdotv < 0:
        nu = -nu
    E = 2.0 * math.atan2(
        math.sqrt(1.0 - e) * math.sin(nu / 2.0),
        math.sqrt(1.0 + e) * math.cos(nu / 2.0),
    )
    M = E - e * math.sin(E)
    n = math.sqrt(mu / a**3)
    return KeplerOrbit(a=a, e=e, argp=argp, epoch_M0=M - n * t, mu=mu)


def lvlh_basis(r: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rows: radial, along-track, (cross-track for dim 3) unit vectors."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    er = r / np.linalg.norm(r)
    if r.shape[-1] == 2:
        et = np.array([-er[1], er[0]])
        if et @ v < 0:
            et = -et
        return np.stack([er, et])
    h = np.cross(r, v)
    eh = h / np.linalg.norm(h)
    et = np.cross(eh, er)
    return np.stack([er, et, eh])


# ---------------------------------------------------------------------------
# Integrators

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def integrate_to_grid(
    rhs,
    t0: float,
    x0: np.ndarray,
    t_grid: np.ndarray,
    rtol: float = 1e-10,
    atol: float = 1e-9,
) -> np.ndarray:
    """Adaptive embedded 4(5) integration hitting each grid time exactly.

    The grid must be nondecreasing with t_grid[0] >= t0.  `x0` may be a
    single state (2n,) or a stack (m, 2n); the error control is the max over
    the whole stack, so a batch integrates along a common step sequence.
    Returns an array of shape (len(t_grid),) + x0.shape.

    No dense output: every grid point is an actual step endpoint, which
    keeps the values exactly reproducible.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size and t_grid[0] < t0 - 1e-12:
        raise ValueError("integrate_to_grid: grid starts before t0")
    x = np.array(x0, dtype=float)
    out = np.empty((len(t_grid),) + x.shape)
    t = t0
    k1 = rhs(t, x)
    h = _initial_step(t, x, k1, rhs, rtol, atol)
    K = [None] * 7
    for gi, T in enumerate(t_grid):
        while T - t > 1e-12:
            h_try = min(h, T - t)
            while True:
                K[0] = k1
                for s in range(1, 7):
                    xs = x + h_try * sum(
                        a * K[j] for j, a in enumerate(_DP_A[s])
                    )
                    K[s] = rhs(t + _DP_C[s] * h_try, xs)
                x5 = x + h_try * sum(b * K[j] for j, b in enumerate(_DP_B5) if b)
                x4 = x + h_try * sum(b * K[j] for j, b in enumerate(_DP_B4) if b)
                scale = atol + rtol * np.maximum(np.abs(x), np.abs(x5))
                err = float(np.max(np.abs(x5 - x4) / scale))
                if err <= 1.0:
                    break
                h_try *= max(0.2, 0.9 * err**-0.2)
            t = t + h_try
            x = x5
            k1 = K[6]  # first-same-as-last
            h = h_try * min(5.0, max(0.2, 0.9 * (err + 1e-16) ** -0.2))
        out[gi] = x
    return out


def _initial_step(t, x, k1, rhs, rtol, atol) -> float:
    scale = atol + rtol * np.abs(x)
    d0 = float(np.max(np.abs(x) / scale))
    d1 = float(np.max(np.abs(k1) / scale))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    x1 = x + h0 * k1
    k2 = rhs(t + h0, x1)
    d2 = float(np.max(np.abs(k2 - k1) / scale)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1)


def rk4_step(rhs, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_flow(rhs, t0: float, x0: np.ndarray, dt: float, dt_max: float) -> np.ndarray:
    """Fixed-step RK4 over [t0, t0+dt] with substeps of length <= dt_max
    dividing dt exactly."""
    if dt == 0.0:
        return np.array(x0, dtype=float)
    n_sub = max(1, math.ceil(dt / dt_max - 1e-12))
    h = dt / n_sub
    x = np.array(x0, dtype=float)
    for i in range(n_sub):
        x = rk4_step(rhs, t0 + i * h, x, h)
    return x


# ---------------------------------------------------------------------------
# Disturbance models


@dataclass
class DisturbanceModel:
    """Bounded process noise: continuous acceleration ||d|| <= w_c and
    impulse execution error ||d_g|| <= w_g(||u||).

    mode:
      none               both zero
      random_ball        uniform direction, magnitude U[0.9, 1] * bound
      worst_case_radial  full magnitude along the supplied hint direction
                         (falls back to the radial direction)
      fixed_direction    full magnitude along `direction`
    """

    mode: str = "none"
    w_c: float = 0.0
    w_g_slope: float = 0.0
    w_g_cap: float = 0.0
    direction: np.ndarray | None = None
    _modes = ("none", "random_ball", "worst_case_radial", "fixed_direction")

    def __post_init__(self):
        if self.mode not in self._modes:
            raise ValueError(
                f"disturbance.mode: {self.mode!r} not one of {self._modes}"
            )
        if self.direction is not None:
            d = np.asarray(self.direction, dtype=float)
            self.direction = d / np.linalg.norm(d)

    def accel(
        self,
        rng: np.random.Generator,
        r: np.ndarray,
        hint: np.ndarray | None,
    ) -> np.ndarray:
        n = len(r)
        if self.mode == "none" or self.w_c == 0.0:
            return np.zeros(n)
        if self.mode == "random_ball":
            d = rng.standard_normal(n)
            d /= np.linalg.norm(d)
            return d * (self.w_c * rng.uniform(0.9, 1.0))
        if self.mode == "worst_case_radial":
            if hint is not None and np.linalg.norm(hint) > 0:
                d = hint / np.linalg.norm(hint)
            else:
                d = r / np.linalg.norm(r)
            return d * self.w_c
        return self.direction[:n] * self.w_c

    def impulse_error(
        self, rng: np.random.Generator, u: np.ndarray
    ) -> np.ndarray:
        n = len(u)
        bound = min(self.w_g_slope * float(np.linalg.norm(u)), self.w_g_cap)
        if self.mode == "none" or bound == 0.0:
            return np.zeros(n)
        if self.mode == "random_ball":
            d = rng.standard_normal(n)
            d /= np.linalg.norm(d)
            return d * (bound * rng.uniform(0.9, 1.0))
        if self.mode == "worst_case_radial":
            nu = float(np.linalg.norm(u))
            d = -u / nu if nu > 0 else rng.standard_normal(n)
            d /= np.linalg.norm(d)
            return d * bound
        return self.direction[:n] * bound

"""Two-body propagation for figure overlays.

The package reads the simulator's outputs as plain files, so it carries its
own small propagator: closed-orbit elements to state (Newton on the Kepler
equation) and a fixed-substep RK4 for state-initialized references.  Figure
accuracy, not certification accuracy.
"""

from __future__ import annotations

import math

import numpy as np

MU_EARTH = 3.986004418e14


def _solve_kepler(M: float, e: float) -> float:
    E = M if e < 0.8 else math.pi
    for _ in range(60):
        step = (E - e * math.sin(E) - M) / (1.0 - e * math.cos(E))
        E -= step
        if abs(step) < 1e-14:
            break
    return E


def element_state(orbit: dict, t: float, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Position/velocity at t from {a, e, argp, epoch_M0, incl, raan, mu}."""
    a, e = orbit["a"], orbit["e"]
    mu = orbit.get("mu", MU_EARTH)
    n = math.sqrt(mu / a**3)
    E = _solve_kepler(orbit["epoch_M0"] + n * t, e)
    b = math.sqrt(1.0 - e * e)
    r_pf = np.array([a * (math.cos(E) - e), a * b * math.sin(E)])
    rnorm = a * (1.0 - e * math.cos(E))
    v_pf = (math.sqrt(mu * a) / rnorm) * np.array([-math.sin(E), b * math.cos(E)])

    cw, sw = math.cos(orbit.get("argp", 0.0)), math.sin(orbit.get("argp", 0.0))
    R2 = np.array([[cw, -sw], [sw, cw]])
    if dim == 2:
        return R2 @ r_pf, R2 @ v_pf
    ci, si = math.cos(orbit.get("incl", 0.0)), math.sin(orbit.get("incl", 0.0))
    co, so = math.cos(orbit.get("raan", 0.0)), math.sin(orbit.get("raan", 0.0))
    R3 = np.array(
        [
            [co * cw - so * sw * ci, -co * sw - so * cw * ci, so * si],
            [so * cw + co * sw * ci, -so * sw + co * cw * ci, -co * si],
            [sw * si, cw * si, ci],
        ]
    )
    pf3 = np.array([r_pf[0], r_pf[1], 0.0]), np.array([v_pf[0], v_pf[1], 0.0])
    return R3 @ pf3[0], R3 @ pf3[1]


def element_states(orbit: dict, ts: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    R = np.empty((len(ts), dim))
    V = np.empty((len(ts), dim))
    for k, t in enumerate(ts):
        R[k], V[k] = element_state(orbit, float(t), dim)
    return R, V


def twobody_states(
    r0: np.ndarray, v0: np.ndarray, mu: float, ts: np.ndarray, max_step: float = 10.0
) -> tuple[np.ndarray, np.ndarray]:
    """RK4 two-body trajectory through the (sorted, >= t0 = ts[0]) grid."""

    def acc(r):
        return -mu * r / np.linalg.norm(r) ** 3

    def rk4(r, v, h):
        k1r, k1v = v, acc(r)
        k2r, k2v = v + 0.5 * h * k1v, acc(r + 0.5 * h * k1r)
        k3r, k3v = v + 0.5 * h * k2v, acc(r + 0.5 * h * k2r)
        k4r, k4v = v + h * k3v, acc(r + h * k3r)
        return (
            r + (h / 6.0) * (k1r + 2 * k2r + 2 * k3r + k4r),
            v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v),
        )

    r, v = np.asarray(r0, dtype=float), np.asarray(v0, dtype=float)
    t = float(ts[0])
    R = np.empty((len(ts), r.shape[0]))
    V = np.empty_like(R)
    R[0], V[0] = r, v
    for k in range(1, len(ts)):
        span = float(ts[k]) - t
        steps = max(1, int(math.ceil(span / max_step)))
        h = span / steps
        for _ in range(steps):
            r, v = rk4(r, v, h)
        t = float(ts[k])
        R[k], V[k] = r, v
    return R, V

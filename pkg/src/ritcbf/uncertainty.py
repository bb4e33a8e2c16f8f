"""Open-loop uncertainty tube for the scalar error-bound dynamics.

Between ground measurements the observer carries a componentwise bound
rho = (rho_r, rho_v) on the estimation error (position norm, velocity norm).
The bound flows linearly,

    d/dt [rho_r]   [0     1   ] [rho_r]   [ 0 ]
         [rho_v] = [l_fr  l_fv] [rho_v] + [w_c],

where (l_fr, l_fv) are Lipschitz constants of the vehicle-minus-reference
acceleration and w_c bounds the continuous disturbance.  Everything in this
module is a closed-form function of the 2x2 matrix

    A = [[0, 1], [l_fr, l_fv]],

evaluated spectrally around the eigenvalue midpoint m = l_fv / 2.  With
delta^2 = disc dt^2 / 4, disc = l_fv^2 + 4 l_fr, and N = A - m I,

    exp(A dt) = e^{m dt} [cosh(delta) I + dt sinhc(delta) N],

where cosh/sinhc become cos/sinc for disc < 0.  This form is exact for
all three eigenvalue configurations (distinct real, repeated, complex
pair) with no branch threshold; the only quantity that loses digits to
cancellation when the roots nearly coincide is the divided difference of
the integral kernel, and that one is evaluated by Gauss-Legendre
quadrature of its derivative over the root segment instead of by
subtraction.  No matrix inverse appears anywhere, so l_fr = 0 and the
double-integrator l = (0, 0) are exact, not limits.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

# Below this |w| the exp-quotient functions switch to their power series.
_SERIES_CUTOVER = 0.5

# Gauss-Legendre rule on [-1, 1] for the divided-difference quadrature.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _phi1(w: complex) -> complex:
    """(e^w - 1)/w, series near 0."""
    if abs(w) < _SERIES_CUTOVER:
        term = 1.0 + 0.0j
        acc = term
        k = 1
        while True:
            term = term * w / (k + 1)
            acc += term
            if abs(term) < 1e-20:
                return acc
            k += 1
    return (np.exp(w) - 1.0) / w


def _psi(w: complex) -> complex:
    """(w e^w - e^w + 1)/w^2, series near 0; psi(0) = 1/2."""
    if abs(w) < _SERIES_CUTOVER:
        acc = 0.0 + 0.0j
        # sum_{j>=0} w^j (j+1)/(j+2)!
        pw = 1.0 + 0.0j
        fact = 2.0  # (j+2)! starting at j=0
        j = 0
        while True:
            term = pw * (j + 1) / fact
            acc += term
            if abs(term) < 1e-20 and j > 2:
                return acc
            j += 1
            pw *= w
            fact *= j + 2
    return (w * np.exp(w) - np.exp(w) + 1.0) / (w * w)


def _phi1_sym(zm: float, q: float) -> tuple[float, float]:
    """Mean and divided difference of phi1 at the roots zm +- sqrt(q).

    q = delta^2 is signed; complex-pair roots enter as q < 0.  The mean
    never cancels (phi1 > 0 on the reals, conjugate symmetry otherwise).
    The divided difference is computed from phi1' = psi by quadrature
    whenever the roots are close enough for direct subtraction to lose
    digits.
    """
    if q == 0.0:
        return _phi1(zm).real, _psi(zm).real
    if q > 0.0:
        sq = math.sqrt(q)
        avg = 0.5 * (_phi1(zm + sq) + _phi1(zm - sq)).real
        if sq >= 1.0:
            dd = ((_phi1(zm + sq) - _phi1(zm - sq)) / (2.0 * sq)).real
        else:
            dd = sum(
                w * _psi(zm + x * sq).real for x, w in zip(_GL_X, _GL_W)
            ) * 0.5
        return avg, dd
    y = math.sqrt(-q)
    if y >= 1.0:
        w = _phi1(complex(zm, y))
        return w.real, w.imag / y
    avg = _phi1(complex(zm, y)).real
    dd = sum(
        w * _psi(complex(zm, x * y)).real for x, w in zip(_GL_X, _GL_W)
    ) * 0.5
    return avg, dd


def error_matrix(l_fr: float, l_fv: float) -> np.ndarray:
    return np.array([[0.0, 1.0], [l_fr, l_fv]])


@functools.lru_cache(maxsize=4096)
def flow_operators(
    l_fr: float, l_fv: float, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """Return (E, Phi) with E = exp(A dt) and Phi = int_0^dt exp(A s) ds.

    Both are exact to roundoff via the spectral formulas above.  Results are
    cached per (l_fr, l_fv, dt); the returned arrays are read-only.
    """
    if dt < 0:
        raise ValueError(f"flow_operators: dt must be >= 0, got {dt}")
    identity = np.eye(2)
    if dt == 0.0:
        E = identity.copy()
        Phi = np.zeros((2, 2))
        E.setflags(write=False)
        Phi.setflags(write=False)
        return E, Phi

    A = error_matrix(l_fr, l_fv)
    m = 0.5 * l_fv
    zm = m * dt
    disc = l_fv * l_fv + 4.0 * l_fr
    q = 0.25 * disc * dt * dt  # signed delta^2
    N = A - m * identity

    if q > 0.0:
        d = math.sqrt(q)
        ch, sc = math.cosh(d), math.sinh(d) / d
    elif q < 0.0:
        y = math.sqrt(-q)
        ch, sc = math.cos(y), math.sin(y) / y
    else:
        ch, sc = 1.0, 1.0
    E = math.exp(zm) * (ch * identity + (dt * sc) * N)

    avg, dd = _phi1_sym(zm, q)
    Phi = (dt * avg) * identity + (dt * dt * dd) * N

    E.setflags(write=False)
    Phi.setflags(write=False)
    return E, Phi


def expm_A(dt: float, l_fr: float, l_fv: float) -> np.ndarray:
    """exp(A dt) alone, for callers that age a bound with no drive term."""
    return flow_operators(l_fr, l_fv, dt)[0]


def propagate_q(
    dt: float,
    rho: np.ndarray,
    l_fr: float,
    l_fv: float,
    w_c: float,
) -> np.ndarray:
    """Tube bound after flowing dt with disturbance level w_c.

    q(dt, rho) = exp(A dt) rho + Phi(dt) [0, w_c].  `rho` may be (2,) or
    (N, 2); the result has the same shape.
    """
    E, Phi = flow_operators(l_fr, l_fv, dt)
    rho = np.asarray(rho, dtype=float)
    drive = Phi @ np.array([0.0, w_c])
    return rho @ E.T + drive


def recovery_q(
    dt: float,
    rho: np.ndarray,
    l_fr: float,
    l_fv: float,
    w_c: float,
    W_g: float,
) -> np.ndarray:
    """Tube bound robust to impulses anywhere in the window: the impulse
    execution error is absorbed as extra continuous drive w_c + W_g."""
    return propagate_q(dt, rho, l_fr, l_fv, w_c + W_g)


# The thrust-on tube is the starred variant of the plain flow.
propagate_q_star = recovery_q


def preactuation_q(
    T_M: float,
    T_m: float,
    T_a: float,
    rho_bar: np.ndarray,
    l_fr: float,
    l_fv: float,
    w_c: float,
    W_g: float,
) -> np.ndarray:
    """Worst-case bound at the first post-blackout impulse opportunity.

    Measured knowledge rho_bar ages for up to T_M - T_m before the actuator
    unlocks; on the way at most N - 1 earlier impulses may fire (dwell T_a
    apart), each injecting a velocity error W_g that then propagates:

        q1 = exp(A (T_M - T_m)) rho_bar + Phi(T_M - T_m) [0, w_c]
        q2 = sum_{i=1}^{N-1} exp(A (T_M - T_m - T_a (i-1))) [0, W_g]
        N  = 1 + floor((T_M - T_m)/T_a)

    The final impulse of the window is excluded: its error is charged to the
    candidate update that fires it.
    """
    span = T_M - T_m
    if span < 0:
        raise ValueError("preactuation_q: need T_M >= T_m")
    q = propagate_q(span, np.asarray(rho_bar, dtype=float), l_fr, l_fv, w_c)
    if T_a <= 0:
        return q
    N = 1 + math.floor(span / T_a)
    inject = np.array([0.0, W_g])
    for i in range(1, N):
        E, _ = flow_operators(l_fr, l_fv, span - T_a * (i - 1))
        q = q + E @ inject
    return q


@dataclass(frozen=True)
class UncertaintyConfig:
    """Disturbance and error-growth model parameters.

    l_fr, l_fv : Lipschitz constants of the relative acceleration in
        position and velocity (1/s^2, 1/s).
    w_c : bound on the continuous disturbance acceleration (m/s^2).
    w_g_slope, w_g_cap : the impulse execution error satisfies
        ||d_g|| <= w_g(||u||) = min(w_g_slope * ||u||, w_g_cap)  (m/s).
    rho_bar_r, rho_bar_v : error bounds delivered with each ground
        measurement (m, m/s).
    """

    l_fr: float
    l_fv: float
    w_c: float
    w_g_slope: float
    w_g_cap: float
    rho_bar_r: float
    rho_bar_v: float

    def w_g(self, u_norm: float) -> float:
        return min(self.w_g_slope * u_norm, self.w_g_cap)

    def W_g(self, u_norm_max: float) -> float:
        """sup of w_g over the input set, given sup ||u||."""
        return self.w_g(u_norm_max)

    def rho_bar(self) -> np.ndarray:
        return np.array([self.rho_bar_r, self.rho_bar_v])

    def validate(self) -> None:
        for name in ("w_c", "w_g_slope", "w_g_cap", "rho_bar_r", "rho_bar_v"):
            v = getattr(self, name)
            if not v >= 0:
                raise ValueError(f"uncertainty.{name}: need >= 0, got {v}")
        if not self.l_fr >= 0:
            raise ValueError(f"uncertainty.l_fr: need >= 0, got {self.l_fr}")
        if not self.l_fv >= 0:
            raise ValueError(f"uncertainty.l_fv: need >= 0, got {self.l_fv}")


def gravity_shell_l_fr(mu: float, r_min: float) -> float:
    """Lipschitz constant of the inverse-square acceleration over the
    shell ||r|| >= r_min: the Jacobian norm peaks at 2 mu / r_min^3."""
    return 2.0 * mu / r_min**3

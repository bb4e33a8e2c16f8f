"""Independent reference implementations used as test oracles.

Nothing here may import the closed forms under test.  Each oracle takes a
deliberately different route to the same quantity: Taylor series with
scaling and squaring for the matrix exponential, fixed-step RK4 assembled
by binary powering for the tube flow, eccentric-anomaly f&g series for
Kepler propagation, active-set enumeration plus an LP phase-1 for the QP,
and brute-force schedule enumeration for the pre-actuation bound.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog


# ---------------------------------------------------------------------------
# matrix exponential, scaling and squaring on a plain Taylor series


def expm_series(A: np.ndarray) -> np.ndarray:
    """exp(A) via scaled Taylor series.  Accurate to ~1e-15 for the sizes
    used in tests; independent of any spectral decomposition."""
    A = np.asarray(A, dtype=float)
    nrm = np.linalg.norm(A, ord=np.inf)
    s = 0
    if nrm > 0.25:
        s = int(math.ceil(math.log2(nrm / 0.25)))
    B = A / (2.0**s)
    X = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, 60):
        term = term @ B / k
        X = X + term
        if np.abs(term).max() < 1e-30:
            break
    for _ in range(s):
        X = X @ X
    return X


def tube_matrix(l_fr: float, l_fv: float) -> np.ndarray:
    return np.array([[0.0, 1.0], [l_fr, l_fv]])


def flow_pair_series(l_fr: float, l_fv: float, dt: float):
    """(E, Phi) = (exp(A dt), int_0^dt exp(A s) ds) via one augmented
    exponential: exp([[A, I], [0, 0]] dt) has Phi in its upper-right block."""
    A = tube_matrix(l_fr, l_fv)
    M = np.zeros((4, 4))
    M[:2, :2] = A * dt
    M[:2, 2:] = np.eye(2) * dt
    X = expm_series(M)
    return X[:2, :2], X[:2, 2:]


# ---------------------------------------------------------------------------
# fixed-step RK4 for the affine tube flow, assembled in O(log n)


def _rk4_affine_step_maps(A: np.ndarray, h: float):
    """One classical RK4 step of x' = A x + b is exactly x+ = M x + N b."""
    hA = h * A
    I = np.eye(A.shape[0])
    M = I + hA + hA @ hA / 2 + hA @ hA @ hA / 6 + hA @ hA @ hA @ hA / 24
    N = h * (I + hA / 2 + hA @ hA / 6 + hA @ hA @ hA / 24)
    return M, N


def _pow_and_sum(M: np.ndarray, n: int):
    """(M^n, sum_{k=0}^{n-1} M^k) by recursive doubling."""
    if n == 0:
        return np.eye(M.shape[0]), np.zeros_like(M)
    if n % 2:
        P, S = _pow_and_sum(M, n - 1)
        return P @ M, S + P
    P, S = _pow_and_sum(M, n // 2)
    return P @ P, S + S @ P


def rk4_tube_flow(
    rho0: np.ndarray,
    l_fr: float,
    l_fv: float,
    drive: float,
    n_steps: int,
    h: float = 1e-3,
) -> np.ndarray:
    """n_steps of RK4 with step h on rho' = A rho + [0, drive].

    Bitwise it is the same affine map per step as a literal loop; the
    powering only reassociates the floating-point products, which matters
    far below the 1e-9 tolerances it is used at.
    """
    A = tube_matrix(l_fr, l_fv)
    M, N = _rk4_affine_step_maps(A, h)
    Pn, Sn = _pow_and_sum(M, n_steps)
    b = N @ np.array([0.0, drive])
    return Pn @ np.asarray(rho0, dtype=float) + Sn @ b


# ---------------------------------------------------------------------------
# Kepler two-body propagation, f and g with an eccentric-anomaly difference


def kepler_fg(r0, v0, dt: float, mu: float):
    """Closed-form elliptic two-body propagation (Vallado's f&g form).

    Works in 2 or 3 dimensions; requires a bound orbit.  Independent of
    orbital-element fitting: only |r0|, r0.v0 and the energy enter.
    """
    r0 = np.asarray(r0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    rn0 = float(np.linalg.norm(r0))
    alpha = 2.0 / rn0 - float(v0 @ v0) / mu
    if alpha <= 0:
        raise ValueError("kepler_fg: orbit not elliptic")
    a = 1.0 / alpha
    n = math.sqrt(mu / a**3)
    sig0 = float(r0 @ v0) / math.sqrt(mu)
    c1 = 1.0 - rn0 / a
    c2 = sig0 / math.sqrt(a)
    Md = n * dt

    # Kepler equation in the anomaly difference; Newton from Md converges
    # globally here because |c1|, |c2| << 1 for the near-circular orbits
    # exercised in tests.
    dE = Md
    for _ in range(80):
        f_val = dE - c1 * math.sin(dE) + c2 * (1.0 - math.cos(dE)) - Md
        f_der = 1.0 - c1 * math.cos(dE) + c2 * math.sin(dE)
        step = f_val / f_der
        dE -= step
        if abs(step) < 1e-14 * max(1.0, abs(dE)):
            break

    sE, cE = math.sin(dE), math.cos(dE)
    f = 1.0 - (a / rn0) * (1.0 - cE)
    g = dt + (sE - dE) / n
    r = f * r0 + g * v0
    rn = float(np.linalg.norm(r))
    fdot = -math.sqrt(mu * a) * sE / (rn * rn0)
    gdot = 1.0 - (a / rn) * (1.0 - cE)
    v = fdot * r0 + gdot * v0
    # conservation identity of the f&g solution; loose guard against a
    # botched Newton solve rather than a tight accuracy claim
    assert abs(f * gdot - fdot * g - 1.0) < 1e-9
    return r, v


# ---------------------------------------------------------------------------
# dense trajectory maximum for the prediction bound


def dense_h_max(family, t: float, x_hat, delta: float, psi_cfg, mu: float,
                factor: int = 100):
    """max of h along the predicted trajectory on a grid `factor` times
    finer than the one psi_h uses."""
    from ritcbf.cbf import prediction_grid, predict_states

    base = prediction_grid(delta, psi_cfg)
    if len(base) == 1:
        offs = np.asarray(base)
    else:
        pieces = [np.array([base[0]])]
        for a, b in zip(base[:-1], base[1:]):
            pieces.append(np.linspace(a, b, factor + 1)[1:])
        offs = np.concatenate(pieces)
    X = np.asarray(x_hat, dtype=float)[None, :]
    traj = predict_states(mu, t, X, offs, psi_cfg)
    h = family.h_rate_acc(t + offs, traj, mu)[0]
    return float(np.max(h))


# ---------------------------------------------------------------------------
# QP oracle: LP phase-1 verdict + active-set enumeration optimum


def lp_min_violation(A: np.ndarray, c: np.ndarray, u_max: float) -> float:
    """Exact min over u of max_i (A u - c)_i subject to |u_j| <= u_max,
    via an LP.  <= 0 iff the constraint system is feasible."""
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    if A.size == 0:
        return 0.0
    m, dim = A.shape
    A_ub = np.hstack([A, -np.ones((m, 1))])
    res = linprog(
        c=[0.0] * dim + [1.0],
        A_ub=A_ub,
        b_ub=c,
        bounds=[(-u_max, u_max)] * dim + [(None, None)],
        method="highs",
    )
    assert res.status == 0, f"phase-1 LP failed: {res.message}"
    return float(res.fun)


def _subsets_for(rows: int, dim: int, n_box_pairs: int):
    """All active-set index tuples of size <= dim, skipping sets that
    contain both sides of a box pair (rows m+i and m+dim+i)."""
    m = rows - 2 * n_box_pairs
    out = [()]
    for k in range(1, dim + 1):
        for sub in itertools.combinations(range(rows), k):
            bad = False
            for i in range(n_box_pairs):
                if (m + i) in sub and (m + n_box_pairs + i) in sub:
                    bad = True
                    break
            if not bad:
                out.append(sub)
    return out


def qp_enum_batch(U_nom: np.ndarray, A: np.ndarray, C: np.ndarray,
                  u_max: np.ndarray):
    """Brute-force minimum-distance QP over a batch of problems sharing
    one (m, dim) shape: enumerate every candidate active set, solve the
    KKT equalities, keep primal-feasible dual-nonnegative candidates.

    Returns (found, U_best): found[b] False means no KKT candidate was
    feasible (the problem is infeasible for nondegenerate data).
    """
    U_nom = np.asarray(U_nom, dtype=float)
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    u_max = np.asarray(u_max, dtype=float)
    B, m, dim = A.shape

    eye = np.eye(dim)
    box_rows = np.broadcast_to(np.concatenate([eye, -eye]), (B, 2 * dim, dim))
    rows = np.concatenate([A, box_rows], axis=1)
    cbox = np.repeat(u_max[:, None], 2 * dim, axis=1)
    cs = np.concatenate([C, cbox], axis=1)
    n_rows = m + 2 * dim

    scale = np.maximum(1.0, np.abs(cs).max(axis=1))
    feas_tol = 1e-9 * scale
    dual_tol = 1e-9

    best_obj = np.full(B, np.inf)
    best_u = np.zeros((B, dim))
    found = np.zeros(B, dtype=bool)

    def consider(U_cand, ok_mask):
        nonlocal best_obj, best_u, found
        viol = np.einsum("brd,bd->br", rows, U_cand) - cs
        feasible = (viol <= feas_tol[:, None]).all(axis=1) & ok_mask
        obj = np.einsum("bd,bd->b", U_cand - U_nom, U_cand - U_nom)
        better = feasible & (obj < best_obj)
        best_obj = np.where(better, obj, best_obj)
        best_u[better] = U_cand[better]
        found |= feasible

    consider(U_nom.copy(), np.ones(B, dtype=bool))

    for sub in _subsets_for(n_rows, dim, dim)[1:]:
        idx = np.array(sub)
        G = rows[:, idx, :]                      # (B, k, dim)
        cG = cs[:, idx]                          # (B, k)
        GGt = np.einsum("bkd,bjd->bkj", G, G)    # (B, k, k)
        det = np.linalg.det(GGt)
        ok = np.abs(det) > 1e-10
        safe = np.where(ok[:, None, None], GGt,
                        np.broadcast_to(np.eye(len(idx)), GGt.shape))
        rhs = np.einsum("bkd,bd->bk", G, U_nom) - cG
        lam = np.linalg.solve(safe, rhs[..., None])[..., 0]
        ok &= (lam >= -dual_tol).all(axis=1)
        U_cand = U_nom - np.einsum("bkd,bk->bd", G, lam)
        consider(U_cand, ok)

    return found, best_u


# ---------------------------------------------------------------------------
# pre-actuation bound: brute-force enumeration of admissible schedules


def preactuation_schedule_oracle(
    T_M: float,
    T_m: float,
    T_a: float,
    rho_bar,
    l_fr: float,
    l_fv: float,
    w_c: float,
    W_g: float,
    step: float = 1.0,
):
    """Worst final tube radius over every impulse schedule a controller
    could have fired between the measurement and a candidate impulse at
    span = T_M - T_m:
      * impulse times on a `step` grid in [0, span - T_a] (the candidate
        at span must itself respect the dwell),
      * consecutive impulses at least T_a apart,
      * each impulse inflates the velocity radius by W_g.
    Flow maps come from the series exponential, not the closed form under
    test.  Returns the componentwise max over schedules.
    """
    span = T_M - T_m
    n_grid = int(math.floor((span - T_a) / step + 1e-9)) + 1 if span >= T_a else 0
    times = [i * step for i in range(n_grid)]

    ages = {span}
    for tk in times:
        ages.add(span - tk)
    E = {age: flow_pair_series(l_fr, l_fv, age)[0] for age in ages}
    _, Phi = flow_pair_series(l_fr, l_fv, span)

    base = E[span] @ np.asarray(rho_bar, dtype=float) + Phi @ np.array([0.0, w_c])
    inj = np.array([0.0, W_g])

    def admissible(schedule):
        return all(b - a >= T_a - 1e-9 for a, b in zip(schedule, schedule[1:]))

    worst = base.copy()
    max_count = len(times)
    for count in range(1, max_count + 1):
        hit = False
        for sched in itertools.combinations(times, count):
            if not admissible(sched):
                continue
            hit = True
            q = base.copy()
            for tk in sched:
                q = q + E[span - tk] @ inj
            worst = np.maximum(worst, q)
        if not hit:
            break
    return worst

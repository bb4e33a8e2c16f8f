"""Online safety filters and the embedded dense QP solver.

Impulsive mode: at each sample the controller either certifies coasting
through the worst-case decision gap (coast_feasible) or searches for an
impulse whose predicted worst-case barrier stays nonpositive through the
post-impulse gap (impulse_program).  Continuous mode: a min-norm QP enforces
the robust decay condition d/dt[h_hat] <= alpha(-h_hat) for every family.

The QP solver is a primal active-set method for strictly convex objectives
with a diagonal Hessian; infeasibility is certified by a phase-1 pass whose
optimal violation stays positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _nm_minimize

from .cbf import PsiConfig, h_hat_all, predict_states, prediction_grid, psi_h_batch
from .core import TimingConfig, horizon_delta1, horizon_delta2
from .dynamics import gravity
from .uncertainty import UncertaintyConfig, flow_operators, propagate_q


class QPIterationError(RuntimeError):
    pass


class QPSolverError(RuntimeError):
    pass


@dataclass
class QPProblem:
    """min ||u - u_nom||^2  s.t.  A u <= c  and  ||u||_inf <= u_max."""

    u_nom: np.ndarray
    A: np.ndarray  # (m, dim)
    c: np.ndarray  # (m,)
    u_max: float | None = None

    def validate(self) -> None:
        if self.A.ndim != 2 or self.A.shape[0] != self.c.shape[0]:
            raise ValueError("QPProblem: constraint shapes disagree")
        if self.A.shape[0] > 64 or self.A.shape[1] > 6:
            raise ValueError("QPProblem: exceeds 64 constraints / dim 6")
        if not (
            np.all(np.isfinite(self.A))
            and np.all(np.isfinite(self.c))
            and np.all(np.isfinite(self.u_nom))
        ):
            raise ValueError("QPProblem: nonfinite entries")


@dataclass
class QPResult:
    u: np.ndarray
    feasible: bool
    lam: np.ndarray  # multipliers for the stacked constraint rows
    iterations: int
    worst_violation: float = 0.0  # phase-1 optimum when infeasible


_QP_TOL = 1e-10
_TIE_TOL = 1e-12


def _active_set_core(
    Hdiag: np.ndarray,
    z_nom: np.ndarray,
    A: np.ndarray,
    c: np.ndarray,
    z0: np.ndarray,
    max_iter: int,
    dual_tol_rel: float = _QP_TOL,
) -> tuple[np.ndarray, np.ndarray, int]:
    """min 1/2 (z-z_nom)' H (z-z_nom) s.t. A z <= c from feasible z0.

    Identity-like diagonal H > 0.  Returns (z, lam, iterations); lam has one
    entry per row of A (zero off the active set).  Ties when adding a
    blocking constraint break toward the lowest row index.  dual_tol_rel
    sets the multiplier sign test relative to the largest multiplier;
    callers whose working-set solves are worse conditioned pass a looser
    value.
    """
    m, dim = A.shape
    Hinv = 1.0 / Hdiag
    z = z0.astype(float).copy()
    W: list[int] = []
    feas_tol = 1e-9 * max(1.0, float(np.max(np.abs(c))) if m else 1.0)
    for it in range(1, max_iter + 1):
        if W:
            Aw = A[W]
            G = Aw * Hinv @ Aw.T
            rhs = Aw @ z_nom - c[W]
            try:
                lam_w = np.linalg.solve(G, rhs)
            except np.linalg.LinAlgError:
                lam_w, *_ = np.linalg.lstsq(G, rhs, rcond=None)
            z_star = z_nom - (Hinv * (Aw.T @ lam_w))
        else:
            lam_w = np.zeros(0)
            z_star = z_nom.copy()
        p = z_star - z
        if float(np.max(np.abs(p))) <= _QP_TOL * max(1.0, float(np.max(np.abs(z)))):
            # multipliers from an ill-conditioned working-set solve carry
            # noise proportional to their largest entry, so the sign test
            # is relative or phantom negatives cycle the set forever; no
            # absolute floor, because near a phase-1 optimum every genuine
            # multiplier is of order s and a floor would bury the negative
            # one whose drop unlocks the descent
            lam_scale = float(np.max(np.abs(lam_w))) if lam_w.size else 0.0
            lam_tol = dual_tol_rel * lam_scale
            if lam_w.size == 0 or float(lam_w.min()) >= -lam_tol:
                lam = np.zeros(m)
                for k, i in enumerate(W):
                    lam[i] = max(lam_w[k], 0.0)
                return z, lam, it
            drop = int(np.argmin(lam_w))
            W.pop(drop)
            continue
        # step toward the equality-constrained optimum, stopping at the
        # first blocking constraint outside the working set
        alpha = 1.0
        blocker = -1
        pscale = float(np.max(np.abs(p)))
        for i in range(m):
            if i in W:
                continue
            ap = float(A[i] @ p)
            # relative screen: a row truly dependent on the working set has
            # a . p = 0, and admitting its roundoff residue corrupts the set
            if ap <= _TIE_TOL * max(1.0, float(np.max(np.abs(A[i]))) * pscale):
                continue
            ai = (c[i] - float(A[i] @ z)) / ap
            if ai < alpha - _TIE_TOL:
                alpha = max(ai, 0.0)
                blocker = i
            elif abs(ai - alpha) <= _TIE_TOL and (blocker == -1 or i < blocker):
                alpha = min(alpha, max(ai, 0.0))
                blocker = i
        z = z + alpha * p
        if blocker >= 0 and alpha < 1.0 - _TIE_TOL:
            W.append(blocker)
        elif blocker == -1 and alpha == 1.0:
            z = z_star
    raise QPIterationError(f"active set did not converge in {max_iter} iterations")


def _stack_box(A, c, dim, u_max):
    if u_max is None or not np.isfinite(u_max):
        return A, c, 0
    rows = np.vstack([np.eye(dim), -np.eye(dim)])
    bnd = np.full(2 * dim, float(u_max))
    return np.vstack([A, rows]) if A.size else rows, np.concatenate([c, bnd]), 2 * dim


def solve_qp(problem: QPProblem) -> QPResult:
    """Unique minimizer over the polytope, or a certified infeasible verdict.

    Zero-normal rows are screened: satisfied ones are dropped, violated ones
    are instantly infeasible.  The KKT residual of a feasible solve is
    checked to 1e-8.
    """
    problem.validate()
    dim = problem.u_nom.shape[0]
    A0, c0 = problem.A, problem.c
    keep = []
    for i in range(A0.shape[0]):
        if float(np.max(np.abs(A0[i]))) < 1e-300:
            if c0[i] < -_QP_TOL:
                return QPResult(
                    u=problem.u_nom.copy(),
                    feasible=False,
                    lam=np.zeros(A0.shape[0]),
                    iterations=0,
                    worst_violation=float(-c0[i]),
                )
        else:
            keep.append(i)
    A = A0[keep] if keep else np.zeros((0, dim))
    c = c0[keep] if keep else np.zeros(0)
    As, cs, _ = _stack_box(A, c, dim, problem.u_max)
    m = As.shape[0]
    max_iter = max(10 * max(m, 1), 20)

    u0 = problem.u_nom.copy()
    if problem.u_max is not None and np.isfinite(problem.u_max):
        u0 = np.clip(u0, -problem.u_max, problem.u_max)
    viol = As @ u0 - cs if m else np.zeros(0)
    if m == 0 or float(viol.max()) <= _QP_TOL:
        z, lam_all, it = _active_set_core(
            np.ones(dim), problem.u_nom, As, cs, u0, max_iter
        )
    else:
        # phase-1 sees the family rows only: it keeps the box hard itself,
        # and soft duplicates of the box rows corrupt its active set.  The
        # verdict threshold scales with the problem reach |A| u_max, not
        # just |c|, matching the resolution phase-1 can actually attain.
        if problem.u_max is not None and np.isfinite(problem.u_max) \
                and problem.u_max > 0.0:
            a_u = float(problem.u_max)
        else:
            a_u = max(1.0, float(np.max(np.abs(u0))))
        reach = max(
            1.0, float(np.max(np.abs(A))) * a_u, float(np.max(np.abs(c)))
        )
        tol = 1e-8 * reach
        u_p1, s_star, it_p1 = _phase1_iterated(
            A, c, dim, problem.u_max, u0, 1e-12 * reach
        )
        if s_star > tol:
            return QPResult(
                u=u_p1,
                feasible=False,
                lam=np.zeros(problem.A.shape[0]),
                iterations=it_p1,
                worst_violation=s_star,
            )
        z, lam_all, it = _active_set_core(
            np.ones(dim), problem.u_nom, As, cs, u_p1, max_iter
        )
    _check_kkt(z, lam_all, problem.u_nom, As, cs)
    lam_out = np.zeros(problem.A.shape[0])
    for k, i in enumerate(keep):
        lam_out[i] = lam_all[k]
    return QPResult(u=z, feasible=True, lam=lam_out, iterations=it)


def _phase1(A, c, dim, u_max, u0, delta=1e-6):
    """Minimize the worst violation s over (u, s) with the box kept hard.

    Solved in equilibrated variables, u in box units and s in units of the
    largest row reach, with every soft row divided by that same reach.  The
    uniform scaling leaves the constraint set and the minimax optimum
    untouched (up to the change of units, undone on return); it exists
    because mixed row scales against the tiny u-regularization otherwise
    push the working-set solves past float64 and the active set cycles.
    Returns (u_least_violating, s_star, iterations); the caller decides
    feasibility by comparing s_star against its tolerance.
    """
    m = A.shape[0]
    if u_max is not None and np.isfinite(u_max) and u_max > 0.0:
        a_u = float(u_max)
    else:
        a_u = max(1.0, float(np.max(np.abs(u0))))
    a_s = max(
        1.0,
        float(np.max(np.abs(A))) * a_u,
        float(np.max(np.abs(c))),
    )
    # rows [a_i a_u / a_s, -1] w <= c_i / a_s; box rows keep s free
    Aa = np.hstack([A * (a_u / a_s), -np.ones((m, 1))])
    ca = c / a_s
    if u_max is not None and np.isfinite(u_max):
        box = np.hstack(
            [np.vstack([np.eye(dim), -np.eye(dim)]), np.zeros((2 * dim, 1))]
        )
        Aa = np.vstack([Aa, box])
        ca = np.concatenate([ca, np.full(2 * dim, float(u_max) / a_u)])
    w0 = np.concatenate(
        [u0 / a_u, [float((A @ u0 - c).max()) / a_s + 1.0]]
    )
    Hdiag = np.concatenate([np.full(dim, 2.0 * delta), [2.0]])
    w_nom = np.concatenate([u0 / a_u, [0.0]])
    w, _, it = _active_set_core(
        Hdiag, w_nom, Aa, ca, w0, max(10 * Aa.shape[0], 40),
        dual_tol_rel=1e-7,
    )
    u_ret = w[:dim] * a_u
    if u_max is not None and np.isfinite(u_max):
        # working-set solves at extreme curvature spread can leak the
        # iterate out of the box by more than roundoff; project back so
        # violations are always measured at a genuine box point
        np.clip(u_ret, -u_max, u_max, out=u_ret)
    return u_ret, float(w[-1]) * a_s, it


def _phase1_iterated(A, c, dim, u_max, u0, stop_at):
    """Phase-1 with proximal restarts under a shrinking regularization.

    The regularized subproblem overshoots its violation optimum by a bias
    of roughly delta * (distance moved) / sigma^2, where sigma is the
    smallest singular value the active geometry leaves in the descent
    direction; when sigma^2 is of order delta, re-anchoring alone only
    shaves a constant factor per pass.  Shrinking delta a hundredfold per
    restart cuts the bias by the same factor independent of sigma, so a
    satisfiable system is driven under stop_at within a few passes while
    an unsatisfiable one stalls at its positive minimax violation.  The
    floor at 1e-12 keeps the core's curvature spread within what float64
    working-set solves tolerate.

    The reported s is the violation actually attained at the returned u,
    not the subproblem's s coordinate: the latter drifts below what the
    point attains when the working-set solves are ill conditioned, and a
    measured violation at a box point can never undershoot the minimax.
    """
    delta = 1e-6
    u, _, it = _phase1(A, c, dim, u_max, u0, delta)
    s = float(np.max(A @ u - c))
    for _ in range(12):
        if s <= stop_at:
            break
        delta = max(1e-2 * delta, 1e-12)
        u2, _, it2 = _phase1(A, c, dim, u_max, u, delta)
        it += it2
        s2 = float(np.max(A @ u2 - c))
        if s - s2 <= 1e-12 * max(1.0, abs(s)):  # converged or stalled
            if s2 < s:
                u, s = u2, s2
            break
        u, s = u2, s2
    return u, s, it


def qp_feasibility(A: np.ndarray, c: np.ndarray, u_max: float) -> float:
    """Least achievable worst violation max_i(a_i . u - c_i) over the box,
    clamped at zero: numerically zero when some u in the box satisfies
    every row jointly, the positive minimax violation otherwise.  The box
    is ||u||_inf <= u_max; rows with zero normals are handled like any
    other (their violation is -c_i regardless of u).  Rows are assumed
    commensurate (within a few decades of a shared scale, which every
    caller in this package satisfies); wildly mixed row scales degrade the
    reported magnitude, though never the sign of a comfortable verdict.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    c = np.asarray(c, dtype=float).ravel()
    if A.shape[0] != c.shape[0]:
        raise ValueError("qp_feasibility: A rows and c length differ")
    if A.shape[0] == 0:
        return 0.0
    dim = A.shape[1]
    reach = max(
        1.0,
        float(np.max(np.abs(A))) * max(float(u_max), 1.0),
        float(np.max(np.abs(c))),
    )
    stop = 1e-12 * reach
    _, s_star, _ = _phase1_iterated(A, c, dim, float(u_max), np.zeros(dim), stop)
    return max(s_star, 0.0)


def _check_kkt(z, lam, u_nom, A, c):
    grad = 2.0 * (z - u_nom)
    if A.shape[0]:
        grad = grad + A.T @ (2.0 * lam)
        resid = A @ z - c
        scale = max(1.0, float(np.max(np.abs(c))), float(np.max(np.abs(z))))
        primal = float(resid.max()) / scale
        # an active row's slack is roundoff at the problem scale, so its
        # product with a genuinely large multiplier is not a failure; the
        # test must be relative to the multiplier magnitude
        lam_scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
        comp = (
            float(np.max(np.abs(lam * resid))) / (scale * lam_scale)
            if lam.size else 0.0
        )
    else:
        primal, comp = 0.0, 0.0
    stat = float(np.max(np.abs(grad))) / max(1.0, float(np.max(np.abs(u_nom))) + 1.0)
    if max(stat, primal, comp) > 1e-8:
        raise QPSolverError(
            f"KKT residual too large: stationarity {stat:.2e}, "
            f"primal {primal:.2e}, complementarity {comp:.2e}"
        )


# ---------------------------------------------------------------------------
# Impulsive decisions


@dataclass
class ImpulsiveDecision:
    b: int
    u: np.ndarray
    feasible: bool
    margin: float
    horizon: float
    kind: str  # coast | impulse | infeasible
    guard_ok: bool = True
    margin_long: float = -math.inf  # advisory look-ahead J, see select_horizon


@dataclass
class ControllerContext:
    """Everything the decision logic needs besides the live estimate."""

    timing: TimingConfig
    unc: UncertaintyConfig
    families: list
    psi: PsiConfig
    mu: float
    u_max: float
    policy: str = "fuel_min"
    multistart_mags: tuple = (0.0625, 0.125, 0.25, 0.5, 1.0)
    refine: str = "when_infeasible"  # always | when_infeasible | never
    refine_maxiter: int = 200
    guard_slack: float = 0.0
    select_horizon: float = 0.0  # advisory look-ahead for candidate choice
    fired_this_cycle: bool = False  # always_actuate bookkeeping


def _lattice_directions(n: int) -> np.ndarray:
    """All nonzero sign-lattice directions {-1,0,1}^n, normalized."""
    grids = np.meshgrid(*([np.array([-1.0, 0.0, 1.0])] * n), indexing="ij")
    D = np.stack([g.ravel() for g in grids], axis=-1)
    D = D[np.any(D != 0.0, axis=1)]
    return D / np.linalg.norm(D, axis=1, keepdims=True)


def tube_burden(
    families, delta: float, rho: np.ndarray, unc: UncertaintyConfig
) -> np.ndarray:
    """l_h^T q(delta, rho) per family; rho may be (2,) or (m, 2)."""
    q = propagate_q(delta, rho, unc.l_fr, unc.l_fv, unc.w_c)
    q = np.atleast_2d(q)
    lips = np.array([f.lip() for f in families])  # (F, 2)
    return lips @ q.T  # (F, m)


def coast_feasible(
    ctx: ControllerContext, t: float, x_hat: np.ndarray, rho: np.ndarray,
    sigma_m: float,
) -> tuple[bool, float]:
    """Certify flowing uncontrolled through the worst-case decision gap."""
    d1 = horizon_delta1(sigma_m, ctx.timing)
    offs = prediction_grid(d1, ctx.psi)
    traj = predict_states(ctx.mu, t, x_hat[None, :], offs, ctx.psi)
    burden = tube_burden(ctx.families, d1, rho, ctx.unc)[:, 0]
    worst = -math.inf
    for i, fam in enumerate(ctx.families):
        psi = float(psi_h_batch(fam, t, offs, traj, ctx.psi, ctx.mu)[0])
        worst = max(worst, psi + burden[i])
    return worst <= 0.0, worst


def _impulse_J_batch(
    ctx: ControllerContext,
    t: float,
    x_hat: np.ndarray,
    rho: np.ndarray,
    U: np.ndarray,
    delta: float,
) -> np.ndarray:
    """Worst-family certificate value for a stack of impulse candidates."""
    n = x_hat.shape[0] // 2
    m = U.shape[0]
    X = np.repeat(x_hat[None, :], m, axis=0)
    X[:, n:] += U
    wg = np.array([ctx.unc.w_g(float(np.linalg.norm(u))) for u in U])
    rho_plus = np.column_stack([np.full(m, rho[0]), rho[1] + wg])
    offs = prediction_grid(delta, ctx.psi)
    traj = predict_states(ctx.mu, t, X, offs, ctx.psi)
    burden = tube_burden(ctx.families, delta, rho_plus, ctx.unc)  # (F, m)
    J = np.full(m, -np.inf)
    for i, fam in enumerate(ctx.families):
        J = np.maximum(
            J, psi_h_batch(fam, t, offs, traj, ctx.psi, ctx.mu) + burden[i]
        )
    return J


def _analytic_directions(ctx, t, x_hat, rho) -> np.ndarray:
    """Push away from the gradient of the currently worst family."""
    vals = h_hat_all(ctx.families, t, x_hat, rho)
    fam = ctx.families[int(np.argmax(vals))]
    _, dh_dr, _ = fam.grads(t, x_hat)
    nrm = float(np.linalg.norm(dh_dr))
    if nrm < 1e-300:
        return np.zeros((0, x_hat.shape[0] // 2))
    return (-dh_dr / nrm)[None, :]


def impulse_program(
    ctx: ControllerContext,
    t: float,
    x_hat: np.ndarray,
    rho: np.ndarray,
    sigma_m: float,
    horizon: float | None = None,
    refine: str | None = None,
) -> ImpulsiveDecision:
    """Search the input ball for an impulse certifying the post-impulse gap.

    Multistart over lattice directions x magnitude ladder, plus u = 0 and a
    push away from the worst family's gradient, evaluated as one batched
    prediction; optionally polished with Nelder-Mead (projected onto the
    ball).  Deterministic.

    Fuel-minimizing policies take the cheapest candidate that certifies
    with guard_slack of margin to spare; the certificate cannot be
    re-established once the running margin drops under the horizon-end tube
    burden, so certifying to exactly zero would paint the vehicle into a
    corner.  A certified candidate can still be a trap beyond its horizon
    (dwell and measurement blackouts delay the next recovery), so when
    select_horizon exceeds the certificate horizon the choice additionally
    prefers candidates whose advisory look-ahead J over that longer span
    also clears the slack.  Feasibility itself is always judged on the
    certificate horizon alone.
    """
    n = x_hat.shape[0] // 2
    delta = horizon if horizon is not None else horizon_delta2(sigma_m, ctx.timing)
    mags = np.array(ctx.multistart_mags) * ctx.u_max
    D = _lattice_directions(n)
    cands = [np.zeros((1, n))]
    cands.append((D[:, None, :] * mags[None, :, None]).reshape(-1, n))
    Da = _analytic_directions(ctx, t, x_hat, rho)
    if Da.shape[0]:
        cands.append((Da[:, None, :] * mags[None, :, None]).reshape(-1, n))
    U = np.vstack(cands)
    J = _impulse_J_batch(ctx, t, x_hat, rho, U, delta)
    if ctx.select_horizon > delta:
        J_sel = _impulse_J_batch(ctx, t, x_hat, rho, U, ctx.select_horizon)
    else:
        J_sel = J
    best = int(np.argmin(J))  # np.argmin takes the lowest index on ties
    u_best, J_best, Jl_best = U[best].copy(), float(J[best]), float(J_sel[best])

    if ctx.policy.startswith("fuel_min") and ctx.guard_slack > 0.0:
        slack = -ctx.guard_slack
        deep = np.flatnonzero((J <= slack) & (J_sel <= slack))
        cert = np.flatnonzero(J <= slack)
        if deep.size:
            norms = np.linalg.norm(U[deep], axis=1)
            pick = int(deep[np.lexsort((J_sel[deep], norms))[0]])
        elif cert.size:
            pick = int(cert[np.argmin(J_sel[cert])])
        else:
            pick = None
        if pick is not None:
            u_best, J_best = U[pick].copy(), float(J[pick])
            Jl_best = float(J_sel[pick])

    mode = refine if refine is not None else ctx.refine
    if mode == "always" or (mode == "when_infeasible" and J_best > 0.0):
        u_best, J_best = _refine_nm(ctx, t, x_hat, rho, u_best, J_best, delta)
        Jl_best = J_best if ctx.select_horizon <= delta else float(
            _impulse_J_batch(ctx, t, x_hat, rho, u_best[None, :],
                             ctx.select_horizon)[0]
        )

    if J_best <= 0.0:
        return ImpulsiveDecision(
            b=1, u=u_best, feasible=True, margin=J_best, horizon=delta,
            kind="impulse", margin_long=Jl_best,
        )
    return ImpulsiveDecision(
        b=0, u=np.zeros(n), feasible=False, margin=J_best, horizon=delta,
        kind="infeasible", margin_long=Jl_best,
    )


def _refine_nm(ctx, t, x_hat, rho, u0, J0, delta):
    u_maxn = ctx.u_max

    def project(u):
        nrm = float(np.linalg.norm(u))
        return u if nrm <= u_maxn else u * (u_maxn / nrm)

    def cost(u):
        return float(
            _impulse_J_batch(ctx, t, x_hat, rho, project(u)[None, :], delta)[0]
        )

    res = _nm_minimize(
        cost,
        u0,
        method="Nelder-Mead",
        options={
            "maxiter": ctx.refine_maxiter,
            "xatol": 1e-6 * max(u_maxn, 1e-12),
            "fatol": 1e-12,
            "adaptive": False,
        },
    )
    u_ref = project(np.asarray(res.x, dtype=float))
    J_ref = float(
        _impulse_J_batch(ctx, t, x_hat, rho, u_ref[None, :], delta)[0]
    )
    if J_ref < J0:
        return u_ref, J_ref
    return u0, J0


def _guard_probe(
    ctx: ControllerContext, t: float, x_hat: np.ndarray, rho: np.ndarray,
    sigma_m: float,
) -> bool:
    """Cheap look-ahead used by fuel_min_guarded: would an impulse still be
    available one sampling period from now if we coast?  The estimate flows
    ballistically (the observer is open loop, so this prediction is exact),
    the tube ages by T_s."""
    Ts = ctx.timing.T_s
    offs = np.array([Ts])
    x_next = predict_states(ctx.mu, t, x_hat[None, :], offs, ctx.psi)[0, 0]
    E, Phi = flow_operators(ctx.unc.l_fr, ctx.unc.l_fv, Ts)
    rho_next = E @ rho + ctx.unc.w_c * Phi[:, 1]
    sm_next = sigma_m - Ts
    if sm_next <= ctx.timing.T_m:
        # the next sample sits in the blackout; knowledge refreshes at the
        # measurement, so there is nothing to guard against
        return True
    probe = impulse_program(
        ctx, t + Ts, x_next, rho_next, sm_next, refine="never"
    )
    return (
        probe.feasible
        and probe.margin <= -ctx.guard_slack
        and probe.margin_long <= -ctx.guard_slack
    )


def decide_impulsive(
    ctx: ControllerContext,
    t: float,
    x_hat: np.ndarray,
    rho: np.ndarray,
    sigma_m: float,
    at_opportunity: bool,
) -> ImpulsiveDecision:
    """Sample-time decision under the configured policy.

    Outside guaranteed impulse opportunities only coasting is available; an
    uncertifiable coast there is reported infeasible (the executor decides
    whether that aborts the run).
    """
    ok, margin = coast_feasible(ctx, t, x_hat, rho, sigma_m)
    n = x_hat.shape[0] // 2
    d1 = horizon_delta1(sigma_m, ctx.timing)
    coast = ImpulsiveDecision(
        b=0, u=np.zeros(n), feasible=ok, margin=margin, horizon=d1,
        kind="coast" if ok else "infeasible",
    )
    if not at_opportunity:
        return coast

    if ctx.policy == "always_actuate" and not ctx.fired_this_cycle:
        dec = impulse_program(ctx, t, x_hat, rho, sigma_m)
        if dec.feasible:
            return dec
        return coast  # fall back to a certified coast if the search failed

    if ctx.policy == "fuel_min_guarded" and ok:
        if _guard_probe(ctx, t, x_hat, rho, sigma_m):
            return coast
        dec = impulse_program(ctx, t, x_hat, rho, sigma_m)
        if dec.feasible:
            return dec
        coast.guard_ok = False  # certified now, flagged for the log
        return coast

    if ok:
        return coast
    return impulse_program(ctx, t, x_hat, rho, sigma_m)


# ---------------------------------------------------------------------------
# Continuous mode


def qp_constraints(
    families,
    t: float,
    x_hat: np.ndarray,
    rho: np.ndarray,
    unc: UncertaintyConfig,
    alpha_slope: float,
    W_g: float,
    mu: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Affine rows (a_i, c_i): a_i . u <= c_i enforcing the robust decay
    d/dt[h_hat_i] <= alpha(-h_hat_i) with the execution error capped by the
    constant W_g (keeps rows affine in u)."""
    n = x_hat.shape[0] // 2
    g = gravity(x_hat[:n], mu)
    rows, bounds = [], []
    rate_common = unc.l_fr * rho[0] + unc.l_fv * rho[1] + unc.w_c + W_g
    for fam in families:
        dh_dt, dh_dr, dh_dv = fam.grads(t, x_hat)
        l_hr, l_hv = fam.lip()
        hh = fam.value(t, x_hat) + l_hr * rho[0] + l_hv * rho[1]
        drift = (
            dh_dt
            + float(dh_dr @ x_hat[n:])
            + float(dh_dv @ g)
            + l_hr * rho[1]
            + l_hv * rate_common
        )
        rows.append(dh_dv)
        bounds.append(alpha_slope * (-hh) - drift)
    return np.array(rows), np.array(bounds)


@dataclass
class ContinuousDecision:
    u: np.ndarray
    feasible: bool
    worst_violation: float = 0.0


def qp_filter(
    families,
    t: float,
    x_hat: np.ndarray,
    rho: np.ndarray,
    unc: UncertaintyConfig,
    alpha_slope: float,
    u_max: float,
    mu: float,
    u_nom: np.ndarray | None = None,
) -> ContinuousDecision:
    """Min-norm thrust satisfying every family's decay constraint inside the
    box ||u||_inf <= u_max.  Infeasibility returns the least-violating u."""
    n = x_hat.shape[0] // 2
    W_g = unc.W_g(u_max * math.sqrt(n))
    A, c = qp_constraints(families, t, x_hat, rho, unc, alpha_slope, W_g, mu)
    prob = QPProblem(
        u_nom=np.zeros(n) if u_nom is None else np.asarray(u_nom, float),
        A=A,
        c=c,
        u_max=u_max,
    )
    res = solve_qp(prob)
    if res.feasible:
        return ContinuousDecision(u=res.u, feasible=True)
    return ContinuousDecision(
        u=res.u, feasible=False, worst_violation=res.worst_violation
    )

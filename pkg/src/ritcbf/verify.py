"""Offline certification of measurement horizons.

verify_rit_cbf / verify_rt_cbf ask whether the online controller could
still certify safety from every state it may plausibly reach: they sample
the declared operating domain, age the uncertainty tube to its certified
worst case for the candidate T_M, and replay the same feasibility test the
controller runs online (impulse program, or affine decay constraints).
max_horizon brackets the largest passing T_M by bisection on one shared
sampler stream.

The verdict is conditional on the declared operating domain: samples are
drawn around the mission geometry (shells around exclusion zones, the
interior of the keep-in polytope), not from the full flight envelope, and
the report records the domain so the condition is explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .cbf import ExclusionZone, Halfspace, h_hat_all
from .config import ScenarioConfig, parse_scenario
from .controller import (
    ControllerContext,
    _analytic_directions,
    _impulse_J_batch,
    _lattice_directions,
    qp_constraints,
    qp_feasibility,
)
from .core import delta_r
from .uncertainty import preactuation_q, recovery_q

# nudge added to every sampled tube level so a zero-disturbance scenario
# still exercises strict inequalities
_RHO_NUDGE = 1e-12
_RT_FEAS_TOL = 1e-9


class DomainEmptyError(RuntimeError):
    """No sampled state satisfies h_hat <= 0 even at fresh measurement
    accuracy; the declared operating domain never intersects the certified
    safe set and there is nothing to verify."""


class BracketError(RuntimeError):
    """max_horizon preconditions failed: the bracket is degenerate, the low
    end does not verify, or the high end does."""


@dataclass(frozen=True)
class VerifierSampling:
    """Sampling resolution for the offline verifiers.

    n_samples : states drawn from the declared domain (shared across all
        tube levels of one probe, and across all probes of a bisection).
    seed : scrambles the Halton stream; the same seed reproduces the same
        states exactly.
    levels : tube levels checked between fresh accuracy and the certified
        worst case (0 picks 3).  Fresh accuracy is always included.
    """

    n_samples: int = 256
    seed: int = 0
    levels: int = 0

    def resolved_levels(self) -> int:
        return self.levels if self.levels > 0 else 3


def sampling_from_config(config: ScenarioConfig) -> VerifierSampling:
    return VerifierSampling(
        n_samples=config.verifier.samples,
        seed=config.seed,
        levels=config.verifier.tau_count,
    )


# ---------------------------------------------------------------------------
# Domain samplers


def _orbit_period(orbit) -> float:
    return 2.0 * math.pi * math.sqrt(orbit.a**3 / orbit.mu)


def _halton(m: int, dims: int, seed: int) -> np.ndarray:
    eng = qmc.Halton(d=dims, scramble=True, seed=seed)
    return eng.random(m)


def _sphere_dir(z01: np.ndarray, phi01: np.ndarray) -> np.ndarray:
    """Area-preserving map [0,1)^2 -> S^2."""
    z = 2.0 * z01 - 1.0
    phi = 2.0 * math.pi * phi01
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


def _zone_domain(
    config: ScenarioConfig, families: list, sampler: VerifierSampling
) -> tuple[np.ndarray, np.ndarray, dict]:
    """States on shells around the exclusion zones (planar scenarios).

    Per sample: an epoch over one zone period, a zone (round robin), a
    position at distance [R_o + min_clearance, R_o + reach] from its
    center, and a velocity within rel_v_max of the center's.
    """
    if config.dimension != 2:
        raise NotImplementedError(
            "zone-domain sampling is implemented for planar scenarios only"
        )
    v = config.verifier
    if not (v.reach > v.min_clearance >= 0.0):
        raise ValueError(
            "verifier: zone domains need reach > min_clearance >= 0"
        )
    m = sampler.n_samples
    u = _halton(m, 5, sampler.seed)
    period = _orbit_period(families[0].orbit)
    ts = u[:, 0] * period
    dist = np.array([f.R_o for f in families])[
        np.arange(m) % len(families)
    ] + (v.min_clearance + u[:, 1] * (v.reach - v.min_clearance))
    ang = 2.0 * math.pi * u[:, 2]
    speed = v.rel_v_max * u[:, 3]
    vang = 2.0 * math.pi * u[:, 4]
    X = np.empty((m, 4))
    for k in range(m):
        fam = families[k % len(families)]
        c_r, c_v = fam.orbit.state(float(ts[k]), 2)
        X[k, :2] = c_r + dist[k] * np.array([math.cos(ang[k]), math.sin(ang[k])])
        X[k, 2:] = c_v + speed[k] * np.array(
            [math.cos(vang[k]), math.sin(vang[k])]
        )
    domain = {
        "kind": "zone_shells",
        "epoch_span": period,
        "min_clearance": v.min_clearance,
        "reach": v.reach,
        "rel_v_max": v.rel_v_max,
        "zones": len(families),
    }
    return ts, X, domain


def _polytope_domain(
    config: ScenarioConfig, families: list, sampler: VerifierSampling
) -> tuple[np.ndarray, np.ndarray, dict]:
    """States inside (a covering ball of) the keep-in polytope."""
    if config.dimension != 3:
        raise NotImplementedError(
            "polytope-domain sampling is implemented for 3-d scenarios only"
        )
    v = config.verifier
    if v.rel_v_max <= 0.0:
        raise ValueError("verifier.rel_v_max: must be > 0 for polytopes")
    m = sampler.n_samples
    u = _halton(m, 7, sampler.seed)
    # covering radius: the polytope lies inside this ball for any facet set
    # whose inradius is min rho_off (icosahedral circumradius ratio < 1.26)
    r_cover = 1.35 * max(f.rho_off for f in families)
    orbit = families[0].orbit
    period = _orbit_period(orbit) if orbit is not None else 1.0
    ts = u[:, 0] * period
    pos_dir = _sphere_dir(u[:, 1], u[:, 2])
    pos_mag = r_cover * u[:, 3] ** (1.0 / 3.0)
    vel_dir = _sphere_dir(u[:, 4], u[:, 5])
    vel_mag = v.rel_v_max * u[:, 6] ** (1.0 / 3.0)
    X = np.empty((m, 6))
    for k in range(m):
        if orbit is not None:
            c_r, c_v = orbit.state(float(ts[k]), 3)
        else:
            c_r, c_v = np.zeros(3), np.zeros(3)
        X[k, :3] = c_r + pos_mag[k] * pos_dir[k]
        X[k, 3:] = c_v + vel_mag[k] * vel_dir[k]
    domain = {
        "kind": "polytope_interior",
        "epoch_span": period,
        "cover_radius": r_cover,
        "rel_v_max": v.rel_v_max,
        "faces": len(families),
    }
    return ts, X, domain


def _draw_domain(config, families, sampler):
    kinds = {type(f).__name__ for f in families}
    if kinds == {"ExclusionZone"}:
        return _zone_domain(config, families, sampler)
    if kinds == {"Halfspace"}:
        return _polytope_domain(config, families, sampler)
    raise NotImplementedError(
        f"no domain sampler for barrier mix {sorted(kinds)}"
    )


# ---------------------------------------------------------------------------
# Tube levels


def _rit_levels(config: ScenarioConfig, levels: int) -> list[tuple[str, np.ndarray]]:
    """Fresh accuracy plus scaled copies of the pre-actuation worst case."""
    unc = config.uncertainty()
    tm = config.timing
    W_g = unc.W_g(config.controller.u_max)
    q3 = preactuation_q(
        tm.T_M, tm.T_m, tm.T_a, unc.rho_bar(), unc.l_fr, unc.l_fv, unc.w_c, W_g
    )
    fresh = unc.rho_bar()
    out = [("fresh", fresh + _RHO_NUDGE)]
    for j in range(1, levels + 1):
        s = j / levels
        out.append((f"aged_{s:.2f}", fresh + s * (q3 - fresh) + _RHO_NUDGE))
    return out


def _rt_levels(config: ScenarioConfig, levels: int) -> list[tuple[str, np.ndarray]]:
    """Open-loop recovery growth sampled over one measurement gap."""
    unc = config.uncertainty()
    n = config.dimension
    W_g = unc.W_g(config.controller.u_max * math.sqrt(n))
    out = []
    for j in range(levels + 1):
        tau = config.timing.T_M * j / levels
        rho = recovery_q(tau, unc.rho_bar(), unc.l_fr, unc.l_fv, unc.w_c, W_g)
        out.append((f"tau_{tau:.0f}", rho + _RHO_NUDGE))
    return out


def _config_at(config: ScenarioConfig, T_M: float) -> ScenarioConfig:
    raw = config.to_dict()
    raw["timing"]["T_M"] = float(T_M)
    raw["timing"]["T_L"] = min(raw["timing"]["T_L"], float(T_M))
    return parse_scenario(raw)


# ---------------------------------------------------------------------------
# RIT: every surviving sample must admit a feasible impulse


def _impulse_candidates(ctx, t, x_hat, rho) -> np.ndarray:
    n = x_hat.shape[0] // 2
    mags = np.array([0.125, 0.25, 0.5, 0.75, 1.0]) * ctx.u_max
    dirs = _lattice_directions(n)
    U = [np.zeros((1, n)), (mags[:, None, None] * dirs[None]).reshape(-1, n)]
    a_dir = _analytic_directions(ctx, t, x_hat, rho)
    if a_dir.shape[0]:
        U.append((mags[:, None, None] * a_dir[None]).reshape(-1, n))
    return np.concatenate(U, axis=0)


def verify_rit_cbf(
    config: ScenarioConfig,
    T_M_candidate: float,
    sampler: VerifierSampling | None = None,
) -> dict:
    """Sampled check that every reachable estimate admits a certifying
    impulse at the round-trip horizon delta_r, under the worst-case tube.

    Verified iff, at every tube level up to the pre-actuation bound, every
    sampled state with h_hat <= 0 has some impulse whose program value is
    <= 0.  worst_margin is the largest program value over the samples (or
    the smallest h_hat deficit when a level's certified set is empty);
    verified means worst_margin <= 0.
    """
    if sampler is None:
        sampler = sampling_from_config(config)
    cfg = _config_at(config, T_M_candidate)
    fams = cfg.families()
    unc = cfg.uncertainty()
    ctx = ControllerContext(
        timing=cfg.timing,
        unc=unc,
        families=fams,
        psi=cfg.psi(),
        mu=cfg.mu,
        u_max=cfg.controller.u_max,
        policy="fuel_min",
        refine="never",
    )
    d_r = delta_r(cfg.timing)
    ts, X, domain = _draw_domain(cfg, fams, sampler)

    worst = -math.inf
    witness = None
    any_certified = False
    for label, rho in _rit_levels(cfg, sampler.resolved_levels()):
        hh = np.array(
            [h_hat_all(fams, float(ts[k]), X[k], rho).max() for k in range(len(ts))]
        )
        alive = np.flatnonzero(hh <= 0.0)
        if alive.size == 0:
            deficit = float(hh.min())
            if deficit > worst:
                worst = deficit
                k = int(hh.argmin())
                witness = _witness(ts[k], X[k], rho, label, deficit, empty=True)
            continue
        any_certified = True
        for k in alive:
            t_k, x_k = float(ts[k]), X[k]
            U = _impulse_candidates(ctx, t_k, x_k, rho)
            J = _impulse_J_batch(ctx, t_k, x_k, rho, U, d_r)
            m_k = float(J.min())
            if m_k > worst:
                worst = m_k
                witness = _witness(t_k, x_k, rho, label, m_k, empty=False)
    if not any_certified:
        raise DomainEmptyError(
            "no sampled state satisfies h_hat <= 0 at any tube level; "
            "the declared domain misses the certified safe set"
        )
    verified = worst <= 0.0
    return _report(
        "rit", T_M_candidate, verified, worst,
        None if verified else witness, sampler, domain,
    )


# ---------------------------------------------------------------------------
# RT: the affine decay constraints must stay jointly feasible


def verify_rt_cbf(
    config: ScenarioConfig,
    T_M_candidate: float,
    sampler: VerifierSampling | None = None,
) -> dict:
    """Sampled check that the decay constraints admit a thrust in the box
    at every reachable estimate, with the tube aged across the gap.

    worst_margin is the largest joint infeasibility over the samples
    (m/s of constraint violation at the best thrust), or the h_hat deficit
    of an empty level; verified means worst_margin <= 0 at resolution.
    """
    if sampler is None:
        sampler = sampling_from_config(config)
    cfg = _config_at(config, T_M_candidate)
    fams = cfg.families()
    unc = cfg.uncertainty()
    n = cfg.dimension
    u_max = cfg.controller.u_max
    W_g = unc.W_g(u_max * math.sqrt(n))
    alpha = cfg.controller.alpha_slope
    ts, X, domain = _draw_domain(cfg, fams, sampler)

    levels = sampler.resolved_levels()
    worst = -math.inf
    witness = None
    any_certified = False
    for label, rho in _rt_levels(cfg, levels):
        hh = np.array(
            [h_hat_all(fams, float(ts[k]), X[k], rho).max() for k in range(len(ts))]
        )
        alive = np.flatnonzero(hh <= 0.0)
        if alive.size == 0:
            deficit = float(hh.min())
            if deficit > worst:
                worst = deficit
                k = int(hh.argmin())
                witness = _witness(ts[k], X[k], rho, label, deficit, empty=True)
            continue
        any_certified = True
        for k in alive:
            t_k, x_k = float(ts[k]), X[k]
            A, c = qp_constraints(fams, t_k, x_k, rho, unc, alpha, W_g, cfg.mu)
            if float(c.min()) >= 0.0:
                m_k = float(-c.min())  # u = 0 already feasible
            else:
                m_k = qp_feasibility(A, c, u_max)
            if m_k > worst:
                worst = m_k
                witness = _witness(t_k, x_k, rho, label, m_k, empty=False)
    if not any_certified:
        raise DomainEmptyError(
            "no sampled state satisfies h_hat <= 0 at any tube level; "
            "the declared domain misses the certified safe set"
        )
    verified = worst <= _RT_FEAS_TOL
    return _report(
        "rt", T_M_candidate, verified, worst,
        None if verified else witness, sampler, domain,
    )


def _witness(t, x, rho, level, margin, empty):
    return {
        "t": float(t),
        "x_hat": [float(v) for v in x],
        "rho": [float(rho[0]), float(rho[1])],
        "level": level,
        "margin": float(margin),
        "domain_empty": bool(empty),
    }


def _report(kind, T_M, verified, worst, witness, sampler, domain):
    return {
        "kind": kind,
        "T_M_candidate": float(T_M),
        "verified_at_resolution": bool(verified),
        "worst_margin": float(worst),
        "witness": witness,
        "sampler": {
            "scheme": "halton",
            "n_samples": sampler.n_samples,
            "seed": sampler.seed,
            "levels": sampler.resolved_levels(),
        },
        "domain": {
            **domain,
            "note": "conditional verification over the declared operating domain",
        },
    }


# ---------------------------------------------------------------------------
# Maximal horizon search


def max_horizon(
    config: ScenarioConfig,
    mode: str,
    T_lo: float,
    T_hi: float,
    tol: float,
    sampler: VerifierSampling | None = None,
    on_probe=None,
) -> float:
    """Largest T_M in [T_lo, T_hi] that verifies, to within tol, by
    bisection.  Every probe reuses the same sampler stream, so the verdict
    is monotone in T_M (asserted); the returned value is the last passing
    probe.

    Raises BracketError if T_lo >= T_hi, T_lo fails, or T_hi passes.
    """
    if mode in ("rit", "impulsive"):
        vf = verify_rit_cbf
    elif mode in ("rt", "continuous"):
        vf = verify_rt_cbf
    else:
        raise ValueError(f"max_horizon: unknown mode {mode!r}")
    if not T_lo < T_hi:
        raise BracketError(f"need T_lo < T_hi, got [{T_lo}, {T_hi}]")
    if not tol > 0.0:
        raise BracketError(f"need tol > 0, got {tol}")
    if sampler is None:
        sampler = sampling_from_config(config)

    max_pass, min_fail = -math.inf, math.inf

    def probe(T: float) -> bool:
        nonlocal max_pass, min_fail
        rep = vf(config, T, sampler)
        ok = rep["verified_at_resolution"]
        if ok:
            max_pass = max(max_pass, T)
        else:
            min_fail = min(min_fail, T)
        assert max_pass < min_fail, (
            f"verdict not monotone in T_M: passed {max_pass}, failed {min_fail}"
        )
        if on_probe is not None:
            on_probe(T, rep)
        return ok

    if not probe(T_lo):
        raise BracketError(f"T_lo = {T_lo} does not verify")
    if tol >= T_hi - T_lo:
        return T_lo
    if probe(T_hi):
        raise BracketError(f"T_hi = {T_hi} verifies; raise the bracket")
    lo, hi = T_lo, T_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return lo

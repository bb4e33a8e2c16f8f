"""Closed-loop hybrid executor, run logging, and the two shipped scenarios.

The executor advances flow between exact event timestamps (sampling instants
t0 + k*T_s and scheduled measurement instants are recomputed, never
integrated, so timers hit zero without drift) and processes the jumps at an
instant in a fixed priority: Measure, then the controller sample decision,
then Actuate if chosen, then SampleReset.  At most 3 jumps can occur at one
instant; a fourth is a Zeno violation and aborts.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cbf import h_hat_all
from .config import ScenarioConfig, parse_scenario
from .controller import (
    ControllerContext,
    decide_impulsive,
    qp_filter,
)
from .core import Timers, is_guaranteed_opportunity, isclose_time
from .dynamics import (
    MU_EARTH,
    DisturbanceModel,
    KeplerOrbit,
    ballistic_rhs,
    gravity,
    integrate_to_grid,
    lvlh_basis,
    orbit_from_state,
    rk4_step,
)
from .observer import Observer, bootstrap_estimate


class ZenoError(RuntimeError):
    pass


class SafetyInfeasibleError(RuntimeError):
    def __init__(self, t: float, margin: float, detail: str = ""):
        self.t = t
        self.margin = margin
        super().__init__(
            f"no certified decision at t={t:.3f} (margin {margin:.6g}) {detail}"
        )


# ---------------------------------------------------------------------------
# Ground station


@dataclass
class GroundStation:
    """Sporadic measurement source.  Fixes carry noise drawn uniformly in a
    ball of radius shrink * rho_bar per block, so the reported radii always
    contain the true error with slack."""

    rho_r: float
    rho_v: float
    shrink: float
    schedule: str  # uniform | fixed_T_M
    T_L: float
    T_M: float

    def _ball(self, rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        return d * radius * rng.uniform(0.0, 1.0) ** (1.0 / n)

    def noisy_fix(self, rng: np.random.Generator, truth: np.ndarray) -> np.ndarray:
        n = truth.shape[0] // 2
        e_r = self._ball(rng, n, self.shrink * self.rho_r)
        e_v = self._ball(rng, n, self.shrink * self.rho_v)
        return np.concatenate([truth[:n] + e_r, truth[n:] + e_v])

    def next_gap(self, rng: np.random.Generator) -> float:
        if self.schedule == "fixed_T_M":
            return self.T_M
        return float(rng.uniform(self.T_L, self.T_M))


# ---------------------------------------------------------------------------
# Logging


def _fmt(x: float) -> str:
    return f"{x:.17g}"


class RunLog:
    """Ordered flow/jump records with the fixed CSV column layout."""

    def __init__(self, n: int, n_families: int):
        self.n = n
        self.n_families = n_families
        self.columns = (
            ["t", "j", "event"]
            + [f"r{i}" for i in range(n)]
            + [f"v{i}" for i in range(n)]
            + [f"r_hat{i}" for i in range(n)]
            + [f"v_hat{i}" for i in range(n)]
            + ["rho_r", "rho_v", "sigma_s", "sigma_a", "sigma_m", "b"]
            + [f"u{i}" for i in range(n)]
            + [f"h_{k}" for k in range(n_families)]
            + [f"hhat_{k}" for k in range(n_families)]
            + ["flags"]
        )
        self.rows: list[list] = []

    def add(self, t, j, event, truth, x_hat, rho, timers, b, u, h, hhat, flags=""):
        n = self.n
        self.rows.append(
            [t, j, event]
            + list(truth[:n]) + list(truth[n:])
            + list(x_hat[:n]) + list(x_hat[n:])
            + [rho[0], rho[1], timers[0], timers[1], timers[2], b]
            + list(u)
            + list(h) + list(hhat)
            + [flags]
        )

    def write_csv(self, path: str) -> None:
        with open(path, "w") as f:
            f.write(",".join(self.columns) + "\n")
            for row in self.rows:
                out = []
                for v in row:
                    if isinstance(v, str):
                        out.append(v)
                    elif isinstance(v, (int, np.integer)):
                        out.append(str(int(v)))
                    else:
                        out.append(_fmt(float(v)))
                f.write(",".join(out) + "\n")

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [row[k] for row in self.rows]


@dataclass
class RunMetrics:
    name: str
    seed: int
    duration: float
    wall_time: float = 0.0
    samples: int = 0
    jumps: int = 0
    max_jumps_per_instant: int = 0
    measurements_accepted: int = 0
    measurements_rejected: int = 0
    impulses: int = 0
    total_dv: float = 0.0
    effort_integral: float = 0.0
    max_u_norm: float = 0.0
    max_h_true: list = field(default_factory=list)
    max_h_true_overall: float = -math.inf
    max_h_hat_overall: float = -math.inf
    violation: bool = False
    soundness_violations: int = 0
    min_slack_r: float = math.inf
    min_slack_v: float = math.inf
    lemma2_violations: int = 0
    lemma2_max_increase: float = -math.inf
    min_coast_margin: float = math.inf
    infeasible_events: int = 0
    guard_holds: int = 0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["max_h_true"] = [float(v) for v in self.max_h_true]
        for k, v in d.items():
            if isinstance(v, float) and math.isinf(v):
                d[k] = None
        return d


def write_metrics(metrics: RunMetrics, path: str) -> None:
    with open(path, "w") as f:
        json.dump(metrics.to_dict(), f, indent=2)
        f.write("\n")


# ---------------------------------------------------------------------------
# Executor


def run_scenario(
    config: ScenarioConfig,
    seed: int | None = None,
    duration: float | None = None,
    strict: bool = True,
) -> tuple[RunLog, RunMetrics]:
    """Execute one closed-loop run.

    strict=True aborts on an uncertifiable decision (SafetyInfeasibleError);
    strict=False applies the least-violating input, flags the record, and
    keeps going.
    """
    config.validate()
    n = config.dimension
    timing = config.timing
    unc = config.uncertainty()
    families = config.families()
    fam_lips = np.array([f.lip() for f in families])
    psi = config.psi()
    mu = config.mu
    impulsive = config.mode == "impulsive"
    rng = np.random.default_rng(config.seed if seed is None else seed)
    used_seed = config.seed if seed is None else seed

    dist = DisturbanceModel(
        mode=config.disturbances.mode,
        w_c=config.disturbances.w_c,
        w_g_slope=config.disturbances.w_g_slope,
        w_g_cap=config.disturbances.w_g_cap,
    )
    station = GroundStation(
        rho_r=config.measurement.rho_r,
        rho_v=config.measurement.rho_v,
        shrink=config.measurement.shrink_factor,
        schedule=config.measurement.schedule,
        T_L=timing.T_L,
        T_M=timing.T_M,
    )
    ctx = ControllerContext(
        timing=timing,
        unc=unc,
        families=families,
        psi=psi,
        mu=mu,
        u_max=config.controller.u_max,
        policy=config.controller.policy,
        refine=config.controller.refine_policy,
        refine_maxiter=200,
        guard_slack=config.controller.fuel_guard_slack,
        select_horizon=config.controller.select_horizon,
    )

    t0 = config.initial.t0
    t_end = t0 + (config.duration if duration is None else duration)
    x = np.concatenate([config.initial.r, config.initial.v]).astype(float)
    log = RunLog(n, len(families))
    met = RunMetrics(
        name=config.name, seed=used_seed, duration=t_end - t0,
        max_h_true=[-math.inf] * len(families),
    )
    wall0 = time.perf_counter()

    observer: Observer | None = None
    k_sample = 0
    t_next_meas = t0  # the initial instant is a measurement instant
    t_last_act = t0 - timing.T_a - timing.T_s  # sigma_a(t0) = -T_s
    b = 0
    u_cont = np.zeros(n)
    j = 0
    t = t0
    substeps = 0

    def timers_at(tq: float) -> tuple[float, float, float]:
        return (
            t0 + k_sample * timing.T_s - tq,
            t_last_act + timing.T_a - tq,
            t_next_meas - tq,
        )

    def true_h(tq: float, xq: np.ndarray) -> np.ndarray:
        return np.array([fam.value(tq, xq) for fam in families])

    def observe_checks(tq: float, h_vals: np.ndarray) -> None:
        # truth-side safety and observer soundness, every logged sample
        for k, v in enumerate(h_vals):
            if v > met.max_h_true[k]:
                met.max_h_true[k] = float(v)
        hmax = float(h_vals.max())
        met.max_h_true_overall = max(met.max_h_true_overall, hmax)
        if hmax > 0.0:
            met.violation = True
        er = float(np.linalg.norm(x[:n] - observer.est.x_hat[:n]))
        ev = float(np.linalg.norm(x[n:] - observer.est.x_hat[n:]))
        sr = observer.est.rho[0] - er
        sv = observer.est.rho[1] - ev
        met.min_slack_r = min(met.min_slack_r, sr)
        met.min_slack_v = min(met.min_slack_v, sv)
        if sr < 0.0 or sv < 0.0:
            met.soundness_violations += 1

    def process_instant() -> None:
        nonlocal observer, k_sample, t_next_meas, t_last_act, b, u_cont, j
        jumps_here = 0
        if isclose_time(t, t_next_meas):
            x_bar = station.noisy_fix(rng, x)
            flags = ""
            if observer is None:
                observer = Observer(bootstrap_estimate(x_bar, unc.rho_bar()), unc, mu)
                accepted = True
                flags = "bootstrap"
            else:
                h_before = h_hat_all(families, t, observer.est.x_hat, observer.est.rho)
                accepted = observer.measurement_jump(x_bar, unc.rho_bar())
                h_after = h_hat_all(families, t, observer.est.x_hat, observer.est.rho)
                if accepted:
                    inc = float((h_after - h_before).max())
                    met.lemma2_max_increase = max(met.lemma2_max_increase, inc)
                    if inc > 0.0:
                        met.lemma2_violations += 1
            if accepted:
                met.measurements_accepted += 1
                flags = flags or "accepted"
            else:
                met.measurements_rejected += 1
                flags = "rejected"
            t_next_meas = t + station.next_gap(rng)
            ctx.fired_this_cycle = False
            j += 1
            jumps_here += 1
            hv = true_h(t, x)
            hh = h_hat_all(families, t, observer.est.x_hat, observer.est.rho)
            met.max_h_hat_overall = max(met.max_h_hat_overall, float(hh.max()))
            log.add(t, j, "measure", x, observer.est.x_hat, observer.est.rho,
                    timers_at(t), b, np.zeros(n), hv, hh, flags)

        if isclose_time(t, t0 + k_sample * timing.T_s):
            sig_s, sig_a, sig_m = timers_at(t)
            est = observer.est
            u_rec = np.zeros(n)
            flags = ""
            if impulsive:
                at_opp = is_guaranteed_opportunity(
                    Timers(0.0, sig_a, sig_m), timing
                )
                dec = decide_impulsive(ctx, t, est.x_hat, est.rho, sig_m, at_opp)
                if dec.kind == "coast":
                    met.min_coast_margin = min(met.min_coast_margin, dec.margin)
                if not dec.feasible:
                    met.infeasible_events += 1
                    if strict:
                        raise SafetyInfeasibleError(t, dec.margin)
                    flags = "infeasible"
                if not dec.guard_ok:
                    met.guard_holds += 1
                    flags = (flags + ";" if flags else "") + "guard_hold"
                if dec.b == 1:
                    u_cmd = dec.u
                    x[n:] += u_cmd + dist.impulse_error(rng, u_cmd)
                    observer.impulse_jump(u_cmd)
                    t_last_act = t
                    ctx.fired_this_cycle = True
                    met.impulses += 1
                    dv = float(np.linalg.norm(u_cmd))
                    met.total_dv += dv
                    met.max_u_norm = max(met.max_u_norm, dv)
                    j += 1
                    jumps_here += 1
                    hv = true_h(t, x)
                    hh = h_hat_all(families, t, est.x_hat, est.rho)
                    log.add(t, j, "actuate", x, est.x_hat, est.rho,
                            timers_at(t), 1, u_cmd, hv, hh, "")
                    u_rec = u_cmd
                    flags = (flags + ";" if flags else "") + dec.kind
                else:
                    flags = (flags + ";" if flags else "") + dec.kind
            else:
                dec = qp_filter(
                    families, t, est.x_hat, est.rho, unc,
                    config.controller.alpha_slope, config.controller.u_max,
                    mu,
                )
                if not dec.feasible:
                    met.infeasible_events += 1
                    if strict:
                        raise SafetyInfeasibleError(t, dec.worst_violation)
                    flags = "infeasible"
                u_cont[:] = dec.u
                u_rec = dec.u
                nu = float(np.linalg.norm(dec.u))
                met.max_u_norm = max(met.max_u_norm, nu)
            # SampleReset closes every sampling instant
            k_sample += 1
            j += 1
            jumps_here += 1
            hv = true_h(t, x)
            hh = h_hat_all(families, t, est.x_hat, est.rho)
            met.max_h_hat_overall = max(met.max_h_hat_overall, float(hh.max()))
            log.add(t, j, "sample", x, est.x_hat, est.rho,
                    timers_at(t), b, u_rec, hv, hh, flags)

        if jumps_here > 3:
            raise ZenoError(f"{jumps_here} jumps at t={t}")
        met.max_jumps_per_instant = max(met.max_jumps_per_instant, jumps_here)
        met.jumps = j

    # initial instant: Measure bootstrap, then the first sample decision
    process_instant()

    log_every = config.integrator.log_every
    truth_dt = config.integrator.truth_dt
    while t < t_end - 1e-12:
        t_next = min(t0 + k_sample * timing.T_s, t_next_meas, t_end)
        span = t_next - t
        n_sub = max(1, math.ceil(span / truth_dt - 1e-12))
        dt = span / n_sub
        for i in range(n_sub):
            ts = t + i * dt
            hint = None
            if dist.mode == "worst_case_radial":
                hv_now = true_h(ts, x)
                _, dh_dr, _ = families[int(np.argmax(hv_now))].grads(ts, x)
                hint = dh_dr
            w = dist.accel(rng, x[:n], hint)
            if not impulsive and float(np.abs(u_cont).max()) > 0.0:
                a_ctrl = u_cont + dist.impulse_error(rng, u_cont)
            else:
                a_ctrl = u_cont if not impulsive else None

            if impulsive:
                def rhs(s, xx):
                    return np.concatenate([xx[n:], gravity(xx[:n], mu) + w])
            else:
                acc = (a_ctrl if a_ctrl is not None else 0.0) + w

                def rhs(s, xx):
                    return np.concatenate([xx[n:], gravity(xx[:n], mu) + acc])

            x = rk4_step(rhs, ts, x, dt)
            observer.flow(ts, dt, dt, None if impulsive else u_cont)
            te = t_next if i == n_sub - 1 else t + (i + 1) * dt
            hv = true_h(te, x)
            observe_checks(te, hv)
            met.samples += 1
            if not impulsive:
                met.effort_integral += float(np.linalg.norm(u_cont)) * dt
            substeps += 1
            if substeps % log_every == 0 or i == n_sub - 1:
                hh = h_hat_all(families, te, observer.est.x_hat, observer.est.rho)
                met.max_h_hat_overall = max(met.max_h_hat_overall, float(hh.max()))
                log.add(te, j, "flow", x, observer.est.x_hat, observer.est.rho,
                        timers_at(te), b, u_cont if not impulsive else np.zeros(n),
                        hv, hh)
        t = t_next
        if t >= t_end - 1e-12:
            break
        process_instant()

    met.wall_time = time.perf_counter() - wall0
    return log, met


# ---------------------------------------------------------------------------
# Monte Carlo


def _worker_count(n_runs: int) -> int:
    env = os.environ.get("RITCBF_THREADS", "")
    cap = int(env) if env.strip() else (os.cpu_count() or 1)
    return max(1, min(cap, n_runs))


def _mc_one(args) -> dict:
    raw, seed, strict = args
    cfg = parse_scenario(raw)
    try:
        _, met = run_scenario(cfg, seed=seed, strict=strict)
    except Exception as e:
        raise RuntimeError(f"run seed={seed} failed: {e}") from e
    return met.to_dict()


def monte_carlo(
    config: ScenarioConfig,
    n_runs: int,
    seeds: list[int] | None = None,
    strict: bool = True,
) -> dict:
    """Independent seeded runs, aggregated.  RITCBF_THREADS caps workers."""
    if n_runs < 1:
        raise ValueError("monte_carlo: n_runs must be >= 1")
    if seeds is None:
        seeds = [config.seed + i for i in range(n_runs)]
    if len(seeds) != n_runs:
        raise ValueError("monte_carlo: len(seeds) != n_runs")
    raw = config.to_dict()
    jobs = [(raw, s, strict) for s in seeds]
    workers = _worker_count(n_runs)
    wall0 = time.perf_counter()
    if workers == 1:
        per_run = [_mc_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            per_run = list(ex.map(_mc_one, jobs))
    dvs = sorted(m["total_dv"] for m in per_run)

    def pct(p):
        if not dvs:
            return 0.0
        k = min(len(dvs) - 1, int(math.ceil(p / 100.0 * len(dvs))) - 1)
        return dvs[max(k, 0)]

    return {
        "scenario": config.name,
        "n_runs": n_runs,
        "seeds": list(seeds),
        "violation_count": sum(1 for m in per_run if m["violation"]),
        "soundness_violation_count": sum(
            m["soundness_violations"] for m in per_run
        ),
        "lemma2_violation_count": sum(m["lemma2_violations"] for m in per_run),
        "infeasible_count": sum(m["infeasible_events"] for m in per_run),
        "max_h_true": max(m["max_h_true_overall"] for m in per_run),
        "max_u_norm": max(m["max_u_norm"] for m in per_run),
        "max_jumps_per_instant": max(
            m["max_jumps_per_instant"] for m in per_run
        ),
        "dv_p50": pct(50),
        "dv_p90": pct(90),
        "dv_max": dvs[-1] if dvs else 0.0,
        "wall_time": time.perf_counter() - wall0,
        "per_run": per_run,
    }


# ---------------------------------------------------------------------------
# Shipped scenarios


def _apply_overrides(raw: dict, overrides: dict | None) -> dict:
    if overrides:
        from .config import set_by_path

        for path, value in overrides.items():
            set_by_path(raw, path, value)
    return raw


def build_rendezvous_scenario(
    T_M: float = 300.0, overrides: dict | None = None
) -> ScenarioConfig:
    """Planar elliptical-orbit rendezvous with impulsive thrust.

    The chaser starts behind and slightly above the target and closes along
    track.  Seven 200 m exclusion zones ride neighboring Keplerian orbits;
    three of them cross the nominal ballistic approach path (their centers
    pass through points of that path with a transversal relative velocity),
    the other four parade alongside it.
    """
    mu = MU_EARTH
    target = KeplerOrbit(a=7.775e6, e=0.1, argp=0.0, epoch_M0=0.0, mu=mu)
    r_t, v_t = target.state(0.0, dim=2)
    basis = lvlh_basis(r_t, v_t)
    radial, along = basis[0], basis[1]
    r0 = r_t + 120.0 * radial - 2600.0 * along
    v0 = v_t + 0.85 * along

    # nominal ballistic chaser path, evaluated exactly at the zone epochs
    t_grid = np.array(
        [250.0, 420.0, 550.0, 760.0, 850.0, 1060.0, 1100.0]
    )
    path = integrate_to_grid(
        lambda s, xx: ballistic_rhs(s, xx, mu),
        0.0, np.concatenate([r0, v0]), t_grid, rtol=1e-12, atol=1e-9,
    )

    def path_state(tq):
        k = int(np.argmin(np.abs(t_grid - tq)))
        if abs(t_grid[k] - tq) > 1e-9:
            raise ValueError(f"no path sample at t={tq}")
        return path[k, :2].copy(), path[k, 2:].copy()

    def perp(v):
        p = np.array([-v[1], v[0]])
        return p / np.linalg.norm(p)

    barriers = []
    # on-path zones: center sits on the chaser's ballistic path at t_k and
    # crosses it with ~1 m/s of transversal relative velocity.  Signs are
    # chosen so overlapping threat windows stay on one side of the path at
    # a time, which keeps an escape corridor open at every decision.
    for tk, dv in ((420.0, 1.0), (760.0, -0.9), (1060.0, 1.1)):
        rc, vc = path_state(tk)
        orb = orbit_from_state(rc, vc + dv * perp(vc), tk, mu)
        barriers.append(
            {"kind": "ExclusionZone", "name": f"zone_path_{int(tk)}",
             "R_o": 200.0, "orbit": _orbit_dict(orb)}
        )
    # offset zones: parade alongside the path, far enough out that dodges
    # of the crossers never run into them
    for tk, off, dv in (
        (250.0, 1000.0, -0.12),
        (550.0, -1000.0, 0.12),
        (850.0, 1000.0, -0.10),
        (1100.0, -1000.0, 0.10),
    ):
        rc, vc = path_state(tk)
        orb = orbit_from_state(rc + off * perp(vc), vc + dv * perp(vc), tk, mu)
        barriers.append(
            {"kind": "ExclusionZone", "name": f"zone_off_{int(tk)}",
             "R_o": 200.0, "orbit": _orbit_dict(orb)}
        )

    r_min = 6.9e6
    raw = {
        "name": "rendezvous",
        "mode": "impulsive",
        "dimension": 2,
        "mu": mu,
        "timing": {"T_s": 10.0, "T_a": 120.0, "T_m": 30.0,
                   "T_L": 140.0, "T_M": float(T_M)},
        "domain": {"r_min": r_min, "r_max": 8.7e6, "v_max": 9000.0},
        "disturbances": {"w_c": 9.2e-6, "w_g_slope": 0.05, "w_g_cap": 5.0,
                         "mode": "random_ball"},
        "measurement": {"rho_r": 5.0, "rho_v": 0.005,
                        "shrink_factor": 0.9, "schedule": "uniform"},
        "lipschitz": {"l_fr": 2.0 * mu / r_min**3, "l_fv": 0.0},
        "barriers": barriers,
        "controller": {"gamma": 1.0, "alpha_slope": 0.0, "u_max": 2.0,
                       "policy": "fuel_min_guarded", "multistart": 8,
                       "psi_grid": 12, "refine_policy": "when_infeasible",
                       "fuel_guard_slack": 40.0, "select_horizon": 450.0,
                       "a_rel_cap": 0.0, "j_rel_cap": 2.0e-4},
        "integrator": {"truth_dt": 1.0, "predict_tol": 1e-10, "log_every": 1},
        "verifier": {"samples": 256, "tau_count": 0, "rel_v_max": 1.5,
                     "min_clearance": 40.0, "reach": 600.0},
        "initial": {"t0": 0.0, "r": list(r0), "v": list(v0)},
        "duration": 1200.0,
        "seed": 20260819,
    }
    return parse_scenario(_apply_overrides(raw, overrides))


def _orbit_dict(o: KeplerOrbit) -> dict:
    return {"a": o.a, "e": o.e, "argp": o.argp, "epoch_M0": o.epoch_M0,
            "incl": o.incl, "raan": o.raan, "mu": o.mu}


def icosahedron_face_normals() -> np.ndarray:
    """The 20 outward unit face normals of a regular icosahedron (equal to
    the vertex directions of its dual dodecahedron), rotated so one normal
    is exactly +z."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    pts = []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                pts.append([sx, sy, sz])
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            pts.append([0.0, s1 / phi, s2 * phi])
            pts.append([s1 / phi, s2 * phi, 0.0])
            pts.append([s2 * phi, 0.0, s1 / phi])
    P = np.array(pts)
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    # rotate (1,1,1)/sqrt(3) onto +z
    a = np.ones(3) / math.sqrt(3.0)
    b = np.array([0.0, 0.0, 1.0])
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    c = float(a @ b)
    K = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    R = np.eye(3) + K + K @ K * ((1 - c) / s**2)
    out = P @ R.T
    # snap the polar pair exactly
    k = int(np.argmax(out[:, 2]))
    out[k] = [0.0, 0.0, 1.0]
    k = int(np.argmin(out[:, 2]))
    out[k] = [0.0, 0.0, -1.0]
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def icosahedron_inradius_ratio() -> float:
    """inradius / circumradius, from the vertex construction."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = []
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            verts.append([0.0, s1, s2 * phi])
            verts.append([s1, s2 * phi, 0.0])
            verts.append([s2 * phi, 0.0, s1])
    V = np.array(verts)
    circum = float(np.linalg.norm(V[0]))
    # the face plane along a face direction is spanned by the three nearest
    # vertices; its distance from the origin is their common projection
    d = np.ones(3) / math.sqrt(3.0)
    proj = np.sort(V @ d)[-3:]
    if not np.allclose(proj, proj[0], rtol=1e-12, atol=1e-12):
        raise RuntimeError("icosahedron face construction failed")
    return float(proj[0]) / circum


def build_stationkeeping_scenario(
    T_M: float = 41040.0, overrides: dict | None = None
) -> ScenarioConfig:
    """GEO station-keeping inside a 10 km icosahedral corridor with weak
    continuous thrust and a single ground fix at t0.

    The vehicle rides a slightly inclined circular orbit, so its cross-track
    offset from the virtual slot center oscillates and periodically grazes
    the polar faces of the polytope; everything else stays deep inside.
    """
    mu = MU_EARTH
    a_geo = 4.2164e7
    center = KeplerOrbit(a=a_geo, e=0.0, argp=0.0, epoch_M0=0.0,
                         incl=0.0, raan=0.0, mu=mu)
    amp = 7460.0
    phase = 0.6
    vehicle = KeplerOrbit(
        a=a_geo, e=0.0, argp=0.0, epoch_M0=phase,
        incl=math.asin(amp / a_geo), raan=-phase, mu=mu,
    )
    r0, v0 = vehicle.state(0.0, dim=3)

    ratio = icosahedron_inradius_ratio()
    rho_off = 10000.0 * ratio
    normals = icosahedron_face_normals()
    gamma = 600.0
    barriers = [
        {"kind": "Halfspace", "name": f"face_{k:02d}", "p": list(p),
         "rho_off": rho_off, "gamma": gamma, "orbit": _orbit_dict(center)}
        for k, p in enumerate(normals)
    ]

    raw = {
        "name": "stationkeeping_geo",
        "mode": "continuous",
        "dimension": 3,
        "mu": mu,
        "timing": {"T_s": 10.0, "T_a": 0.0, "T_m": 0.0,
                   "T_L": float(T_M), "T_M": float(T_M)},
        "domain": {"r_min": a_geo - 2.0e4, "r_max": a_geo + 2.0e4,
                   "v_max": 3200.0},
        "disturbances": {"w_c": 4.56e-6, "w_g_slope": 0.02, "w_g_cap": 5e-5,
                         "mode": "random_ball"},
        "measurement": {"rho_r": 5.0, "rho_v": 0.005,
                        "shrink_factor": 0.9, "schedule": "uniform"},
        "lipschitz": {"l_fr": 0.0, "l_fv": 0.0},
        "barriers": barriers,
        "controller": {"gamma": gamma, "alpha_slope": 0.004, "u_max": 0.02,
                       "policy": "fuel_min", "multistart": 26,
                       "psi_grid": 12, "refine_policy": "never",
                       "fuel_guard_slack": 0.0, "a_rel_cap": 0.0,
                       "j_rel_cap": 3.0e-8},
        "integrator": {"truth_dt": 10.0, "predict_tol": 1e-10,
                       "log_every": 1},
        "verifier": {"samples": 256, "tau_count": 0, "rel_v_max": 1.0,
                     "min_clearance": 0.0, "reach": 0.0},
        "initial": {"t0": 0.0, "r": list(r0), "v": list(v0)},
        "duration": float(T_M),
        "seed": 20260820,
    }
    return parse_scenario(_apply_overrides(raw, overrides))

"""Scenario configuration: typed specs, JSON round trip, strict validation.

The serialized form is a nested JSON object.  Unknown keys are rejected at
every level and validation errors carry the dotted path of the offending
field, so a bad config fails loudly and points at itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .cbf import PsiConfig, family_from_dict
from .core import TimingConfig
from .uncertainty import UncertaintyConfig


class ConfigError(ValueError):
    pass


def _check_keys(d: dict, path: str, required: set, optional: set = frozenset()):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = set(d) - required - set(optional)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ConfigError(f"{path}: missing keys {sorted(missing)}")


def _num(d, key, path, lo=None, hi=None):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{path}.{key}: must be finite")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}.{key}: must be >= {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{path}.{key}: must be <= {hi}")
    return v


def _int(d, key, path, lo=None):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}: expected an integer")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}.{key}: must be >= {lo}")
    return v


def _str(d, key, path, allowed=None):
    v = d[key]
    if not isinstance(v, str):
        raise ConfigError(f"{path}.{key}: expected a string")
    if allowed is not None and v not in allowed:
        raise ConfigError(f"{path}.{key}: must be one of {sorted(allowed)}")
    return v


def _vec(d, key, path, length):
    v = d[key]
    if not isinstance(v, list) or len(v) != length:
        raise ConfigError(f"{path}.{key}: expected a list of {length} numbers")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"{path}.{key}[{i}]: expected a number")
        out.append(float(x))
    return out


@dataclass(frozen=True)
class DomainSpec:
    r_min: float
    r_max: float
    v_max: float


@dataclass(frozen=True)
class DisturbanceSpec:
    w_c: float
    w_g_slope: float
    w_g_cap: float
    mode: str = "random_ball"  # none | random_ball | worst_case_radial


@dataclass(frozen=True)
class MeasurementSpec:
    rho_r: float
    rho_v: float
    shrink_factor: float = 0.9
    schedule: str = "uniform"  # uniform in [T_L, T_M] | fixed_T_M


@dataclass(frozen=True)
class LipschitzSpec:
    l_fr: float
    l_fv: float = 0.0


@dataclass(frozen=True)
class ControllerSpec:
    gamma: float
    alpha_slope: float
    u_max: float
    policy: str
    multistart: int
    psi_grid: int = 12
    refine_policy: str = "when_infeasible"  # always | when_infeasible | never
    fuel_guard_slack: float = 0.0
    select_horizon: float = 0.0
    a_rel_cap: float = 0.0
    j_rel_cap: float = 0.0


@dataclass(frozen=True)
class IntegratorSpec:
    truth_dt: float
    predict_tol: float = 1e-10
    log_every: int = 1


@dataclass(frozen=True)
class InitialSpec:
    t0: float
    r: tuple
    v: tuple


@dataclass(frozen=True)
class VerifierSpec:
    samples: int = 256
    tau_count: int = 0  # 0 = choose from the timing constants
    rel_v_max: float = 0.0
    min_clearance: float = 0.0
    reach: float = 0.0


@dataclass
class ScenarioConfig:
    name: str
    mode: str  # impulsive | continuous
    dimension: int
    mu: float
    timing: TimingConfig
    domain: DomainSpec
    disturbances: DisturbanceSpec
    measurement: MeasurementSpec
    lipschitz: LipschitzSpec
    barriers: list  # serialized family dicts
    controller: ControllerSpec
    integrator: IntegratorSpec
    duration: float
    seed: int
    initial: InitialSpec
    verifier: VerifierSpec = field(default_factory=VerifierSpec)

    # -- derived objects ---------------------------------------------------

    def families(self) -> list:
        return [family_from_dict(b) for b in self.barriers]

    def uncertainty(self) -> UncertaintyConfig:
        return UncertaintyConfig(
            l_fr=self.lipschitz.l_fr,
            l_fv=self.lipschitz.l_fv,
            w_c=self.disturbances.w_c,
            w_g_slope=self.disturbances.w_g_slope,
            w_g_cap=self.disturbances.w_g_cap,
            rho_bar_r=self.measurement.rho_r,
            rho_bar_v=self.measurement.rho_v,
        )

    def psi(self) -> PsiConfig:
        return PsiConfig(
            delta_grid=self.timing.T_M / self.controller.psi_grid,
            a_rel_cap=self.controller.a_rel_cap,
            j_rel_cap=self.controller.j_rel_cap,
            rtol=self.integrator.predict_tol,
            atol=self.integrator.predict_tol * 10.0,
        )

    def validate(self) -> None:
        if self.mode not in ("impulsive", "continuous"):
            raise ConfigError("mode: must be one of ['continuous', 'impulsive']")
        if self.dimension not in (2, 3):
            raise ConfigError("dimension: must be 2 or 3")
        if self.mu <= 0:
            raise ConfigError("mu: must be > 0")
        try:
            self.timing.validate()
        except ValueError as e:
            raise ConfigError(str(e)) from None
        d = self.domain
        if not (0 < d.r_min < d.r_max):
            raise ConfigError("domain: need 0 < r_min < r_max")
        if d.v_max <= 0:
            raise ConfigError("domain.v_max: must be > 0")
        if self.measurement.shrink_factor <= 0 or self.measurement.shrink_factor >= 1:
            raise ConfigError("measurement.shrink_factor: must lie in (0, 1)")
        if not self.barriers:
            raise ConfigError("barriers: at least one family required")
        for i, b in enumerate(self.barriers):
            try:
                family_from_dict(b)
            except Exception as e:
                raise ConfigError(f"barriers[{i}]: {e}") from None
        c = self.controller
        if c.u_max < 0:
            raise ConfigError("controller.u_max: must be >= 0")
        lattice = 3**self.dimension - 1
        if c.multistart != lattice:
            raise ConfigError(
                f"controller.multistart: must equal {lattice} "
                f"(sign-lattice directions for dimension {self.dimension})"
            )
        if c.psi_grid < 1:
            raise ConfigError("controller.psi_grid: must be >= 1")
        if c.policy not in ("fuel_min", "always_actuate", "fuel_min_guarded"):
            raise ConfigError(
                "controller.policy: must be one of ['always_actuate', "
                "'fuel_min', 'fuel_min_guarded']"
            )
        if c.refine_policy not in ("always", "when_infeasible", "never"):
            raise ConfigError(
                "controller.refine_policy: must be one of ['always', "
                "'never', 'when_infeasible']"
            )
        if self.integrator.truth_dt <= 0:
            raise ConfigError("integrator.truth_dt: must be > 0")
        if len(self.initial.r) != self.dimension or len(self.initial.v) != self.dimension:
            raise ConfigError("initial: r and v must have length = dimension")
        if self.duration < 0:
            raise ConfigError("duration: must be >= 0")
        if self.lipschitz.l_fr < 0 or self.lipschitz.l_fv < 0:
            raise ConfigError("lipschitz: constants must be >= 0")

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        t = self.timing
        return {
            "name": self.name,
            "mode": self.mode,
            "dimension": self.dimension,
            "mu": self.mu,
            "timing": {
                "T_s": t.T_s, "T_a": t.T_a, "T_m": t.T_m,
                "T_L": t.T_L, "T_M": t.T_M,
            },
            "domain": {
                "r_min": self.domain.r_min,
                "r_max": self.domain.r_max,
                "v_max": self.domain.v_max,
            },
            "disturbances": {
                "w_c": self.disturbances.w_c,
                "w_g_slope": self.disturbances.w_g_slope,
                "w_g_cap": self.disturbances.w_g_cap,
                "mode": self.disturbances.mode,
            },
            "measurement": {
                "rho_r": self.measurement.rho_r,
                "rho_v": self.measurement.rho_v,
                "shrink_factor": self.measurement.shrink_factor,
                "schedule": self.measurement.schedule,
            },
            "lipschitz": {
                "l_fr": self.lipschitz.l_fr,
                "l_fv": self.lipschitz.l_fv,
            },
            "barriers": [dict(b) for b in self.barriers],
            "controller": {
                "gamma": self.controller.gamma,
                "alpha_slope": self.controller.alpha_slope,
                "u_max": self.controller.u_max,
                "policy": self.controller.policy,
                "multistart": self.controller.multistart,
                "psi_grid": self.controller.psi_grid,
                "refine_policy": self.controller.refine_policy,
                "fuel_guard_slack": self.controller.fuel_guard_slack,
                "select_horizon": self.controller.select_horizon,
                "a_rel_cap": self.controller.a_rel_cap,
                "j_rel_cap": self.controller.j_rel_cap,
            },
            "integrator": {
                "truth_dt": self.integrator.truth_dt,
                "predict_tol": self.integrator.predict_tol,
                "log_every": self.integrator.log_every,
            },
            "verifier": {
                "samples": self.verifier.samples,
                "tau_count": self.verifier.tau_count,
                "rel_v_max": self.verifier.rel_v_max,
                "min_clearance": self.verifier.min_clearance,
                "reach": self.verifier.reach,
            },
            "initial": {
                "t0": self.initial.t0,
                "r": list(self.initial.r),
                "v": list(self.initial.v),
            },
            "duration": self.duration,
            "seed": self.seed,
        }


def parse_scenario(raw: dict) -> ScenarioConfig:
    _check_keys(
        raw, "config",
        required={
            "name", "mode", "dimension", "mu", "timing", "domain",
            "disturbances", "measurement", "lipschitz", "barriers",
            "controller", "integrator", "initial", "duration", "seed",
        },
        optional={"verifier"},
    )
    name = _str(raw, "name", "config")
    mode = _str(raw, "mode", "config", allowed={"impulsive", "continuous"})
    dim = _int(raw, "dimension", "config", lo=2)
    mu = _num(raw, "mu", "config", lo=0.0)

    t = raw["timing"]
    _check_keys(t, "timing", {"T_s", "T_a", "T_m", "T_L", "T_M"})
    timing = TimingConfig(
        T_s=_num(t, "T_s", "timing"),
        T_a=_num(t, "T_a", "timing"),
        T_m=_num(t, "T_m", "timing"),
        T_L=_num(t, "T_L", "timing"),
        T_M=_num(t, "T_M", "timing"),
    )

    dom = raw["domain"]
    _check_keys(dom, "domain", {"r_min", "r_max", "v_max"})
    domain = DomainSpec(
        r_min=_num(dom, "r_min", "domain"),
        r_max=_num(dom, "r_max", "domain"),
        v_max=_num(dom, "v_max", "domain"),
    )

    dist = raw["disturbances"]
    _check_keys(dist, "disturbances", {"w_c", "w_g_slope", "w_g_cap"}, {"mode"})
    disturbances = DisturbanceSpec(
        w_c=_num(dist, "w_c", "disturbances", lo=0.0),
        w_g_slope=_num(dist, "w_g_slope", "disturbances", lo=0.0),
        w_g_cap=_num(dist, "w_g_cap", "disturbances", lo=0.0),
        mode=_str(dist, "mode", "disturbances",
                  {"none", "random_ball", "worst_case_radial"})
        if "mode" in dist else "random_ball",
    )

    meas = raw["measurement"]
    _check_keys(meas, "measurement", {"rho_r", "rho_v"},
                {"shrink_factor", "schedule"})
    measurement = MeasurementSpec(
        rho_r=_num(meas, "rho_r", "measurement", lo=0.0),
        rho_v=_num(meas, "rho_v", "measurement", lo=0.0),
        shrink_factor=_num(meas, "shrink_factor", "measurement")
        if "shrink_factor" in meas else 0.9,
        schedule=_str(meas, "schedule", "measurement", {"uniform", "fixed_T_M"})
        if "schedule" in meas else "uniform",
    )

    lip = raw["lipschitz"]
    _check_keys(lip, "lipschitz", {"l_fr"}, {"l_fv"})
    lipschitz = LipschitzSpec(
        l_fr=_num(lip, "l_fr", "lipschitz", lo=0.0),
        l_fv=_num(lip, "l_fv", "lipschitz", lo=0.0) if "l_fv" in lip else 0.0,
    )

    if not isinstance(raw["barriers"], list):
        raise ConfigError("barriers: expected a list")
    barriers = [dict(b) for b in raw["barriers"]]

    c = raw["controller"]
    _check_keys(
        c, "controller",
        {"gamma", "alpha_slope", "u_max", "policy", "multistart", "psi_grid"},
        {"refine_policy", "fuel_guard_slack", "select_horizon",
         "a_rel_cap", "j_rel_cap"},
    )
    controller = ControllerSpec(
        gamma=_num(c, "gamma", "controller", lo=0.0),
        alpha_slope=_num(c, "alpha_slope", "controller", lo=0.0),
        u_max=_num(c, "u_max", "controller"),
        policy=_str(c, "policy", "controller"),
        multistart=_int(c, "multistart", "controller", lo=1),
        psi_grid=_int(c, "psi_grid", "controller", lo=1),
        refine_policy=_str(c, "refine_policy", "controller")
        if "refine_policy" in c else "when_infeasible",
        fuel_guard_slack=_num(c, "fuel_guard_slack", "controller", lo=0.0)
        if "fuel_guard_slack" in c else 0.0,
        select_horizon=_num(c, "select_horizon", "controller", lo=0.0)
        if "select_horizon" in c else 0.0,
        a_rel_cap=_num(c, "a_rel_cap", "controller", lo=0.0)
        if "a_rel_cap" in c else 0.0,
        j_rel_cap=_num(c, "j_rel_cap", "controller", lo=0.0)
        if "j_rel_cap" in c else 0.0,
    )

    integ = raw["integrator"]
    _check_keys(integ, "integrator", {"truth_dt"}, {"predict_tol", "log_every"})
    integrator = IntegratorSpec(
        truth_dt=_num(integ, "truth_dt", "integrator"),
        predict_tol=_num(integ, "predict_tol", "integrator", lo=0.0)
        if "predict_tol" in integ else 1e-10,
        log_every=_int(integ, "log_every", "integrator", lo=1)
        if "log_every" in integ else 1,
    )

    ver_raw = raw.get("verifier", {})
    _check_keys(ver_raw, "verifier", set(),
                {"samples", "tau_count", "rel_v_max", "min_clearance", "reach"})
    verifier = VerifierSpec(
        samples=_int(ver_raw, "samples", "verifier", lo=1)
        if "samples" in ver_raw else 256,
        tau_count=_int(ver_raw, "tau_count", "verifier", lo=0)
        if "tau_count" in ver_raw else 0,
        rel_v_max=_num(ver_raw, "rel_v_max", "verifier", lo=0.0)
        if "rel_v_max" in ver_raw else 0.0,
        min_clearance=_num(ver_raw, "min_clearance", "verifier", lo=0.0)
        if "min_clearance" in ver_raw else 0.0,
        reach=_num(ver_raw, "reach", "verifier", lo=0.0)
        if "reach" in ver_raw else 0.0,
    )

    init = raw["initial"]
    _check_keys(init, "initial", {"t0", "r", "v"})
    initial = InitialSpec(
        t0=_num(init, "t0", "initial"),
        r=tuple(_vec(init, "r", "initial", dim)),
        v=tuple(_vec(init, "v", "initial", dim)),
    )

    cfg = ScenarioConfig(
        name=name, mode=mode, dimension=dim, mu=mu, timing=timing,
        domain=domain, disturbances=disturbances, measurement=measurement,
        lipschitz=lipschitz, barriers=barriers, controller=controller,
        integrator=integrator, duration=_num(raw, "duration", "config"),
        seed=_int(raw, "seed", "config"), initial=initial, verifier=verifier,
    )
    cfg.validate()
    return cfg


def load_scenario(path: str) -> ScenarioConfig:
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    return parse_scenario(raw)


def save_scenario(cfg: ScenarioConfig, path: str) -> None:
    with open(path, "w") as f:
        json.dump(cfg.to_dict(), f, indent=2)
        f.write("\n")


def set_by_path(raw: dict, dotted: str, value) -> None:
    """Override a scalar field addressed by a dotted path, in place."""
    parts = dotted.split(".")
    node = raw
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"unknown parameter path: {dotted}")
        node = node[p]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown parameter path: {dotted}")
    node[leaf] = value

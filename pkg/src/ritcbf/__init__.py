"""Safety filters for sporadically observed second-order systems.

Layout:
    core         timers, jump-set logic, look-ahead horizons
    uncertainty  closed-form error-tube propagation
    dynamics     two-body / relative dynamics and integrators
    observer     open-loop estimator with measurement acceptance
    cbf          barrier families and the certified prediction bound
    controller   impulse program, QP filter, decision policies
    config       JSON scenario schema
    sim          hybrid closed-loop simulator and Monte Carlo driver
    verify       offline domain verifiers and max-horizon search
    cli          command line entry point (run / verify / max-horizon / sweep)
"""

from .config import ConfigError, ScenarioConfig, load_scenario, parse_scenario
from .core import (
    JumpLabel,
    TimingConfig,
    Timers,
    classify_jumps,
    delta_r,
    horizon_delta1,
    horizon_delta2,
)
from .sim import (
    RunLog,
    RunMetrics,
    SafetyInfeasibleError,
    ZenoError,
    build_rendezvous_scenario,
    build_stationkeeping_scenario,
    monte_carlo,
    run_scenario,
)
from .uncertainty import (
    UncertaintyConfig,
    expm_A,
    preactuation_q,
    propagate_q,
    propagate_q_star,
)
from .verify import max_horizon, verify_rit_cbf, verify_rt_cbf

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "JumpLabel",
    "RunLog",
    "RunMetrics",
    "SafetyInfeasibleError",
    "ScenarioConfig",
    "Timers",
    "TimingConfig",
    "UncertaintyConfig",
    "ZenoError",
    "build_rendezvous_scenario",
    "build_stationkeeping_scenario",
    "classify_jumps",
    "delta_r",
    "expm_A",
    "horizon_delta1",
    "horizon_delta2",
    "load_scenario",
    "max_horizon",
    "monte_carlo",
    "parse_scenario",
    "preactuation_q",
    "propagate_q",
    "propagate_q_star",
    "run_scenario",
    "verify_rit_cbf",
    "verify_rt_cbf",
]

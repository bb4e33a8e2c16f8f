"""Timed hybrid skeleton: clocks, jump sets, look-ahead horizons.

The closed loop is a hybrid system whose discrete events are driven by three
countdown clocks flowing at rate -1:

    sigma_s in [0, T_s]      time to the next onboard sample
    sigma_a in (-inf, T_a]   actuator dwell clock (negative = dwell elapsed)
    sigma_m in [0, T_M]      time to the next ground measurement

plus an impulse-intent bit b set by the controller at samples.  Jumps:

    measure        sigma_m = 0
    actuate        sigma_s = 0, sigma_a <= 0, sigma_m >= T_m, b = 1
    sample reset   sigma_s = 0 and (sigma_a >= 0 or sigma_m <= T_m or b = 0)

The actuate and sample-reset sets overlap on the boundary slices
(sigma_a = 0 or sigma_m = T_m with b = 1); there the model is genuinely
nondeterministic and the executor resolves the choice by policy.  A sample is
a *guaranteed* impulse opportunity when it sits strictly inside the actuate
set (sigma_a < 0 and sigma_m > T_m), because then no resolution of the
nondeterminism can take the opportunity away.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class JumpLabel(enum.Flag):
    """Which jump sets a hybrid state sits in."""

    NONE = 0
    MEASURE = enum.auto()
    ACTUATE = enum.auto()
    SAMPLE_RESET = enum.auto()


@dataclass(frozen=True)
class TimingConfig:
    """Clock bounds for the sporadic sampling / dwell / measurement pattern.

    Attributes
    ----------
    T_s : float
        Onboard sampling period (s).
    T_a : float
        Minimum dwell between impulses (s).
    T_m : float
        Measurement blackout after a ground update during which the
        actuator is locked out (s).
    T_L : float
        Lower bound on the gap between consecutive ground measurements (s).
    T_M : float
        Upper bound on that gap (s).
    """

    T_s: float
    T_a: float
    T_m: float
    T_L: float
    T_M: float

    def validate(self) -> None:
        """Raise ValueError naming the violated inequality."""
        if not self.T_s > 0:
            raise ValueError(f"timing.T_s: need T_s > 0, got {self.T_s}")
        if not self.T_a >= 0:
            raise ValueError(f"timing.T_a: need T_a >= 0, got {self.T_a}")
        if not self.T_m >= 0:
            raise ValueError(f"timing.T_m: need T_m >= 0, got {self.T_m}")
        if not self.T_L <= self.T_M:
            raise ValueError(
                f"timing: need T_L <= T_M, got T_L={self.T_L} > T_M={self.T_M}"
            )
        # Every measurement interval must contain a guaranteed impulse
        # opportunity: blackout + one sample + any residual dwell.
        floor = self.T_m + self.T_s + max(self.T_a - self.T_m, 0.0)
        if not self.T_L > floor:
            raise ValueError(
                "timing: need T_L > T_m + T_s + max(T_a - T_m, 0) "
                f"= {floor}, got T_L={self.T_L}"
            )


@dataclass(frozen=True)
class Timers:
    """Snapshot of the three countdown clocks."""

    sigma_s: float
    sigma_a: float
    sigma_m: float

    def flowed(self, dt: float) -> "Timers":
        return Timers(self.sigma_s - dt, self.sigma_a - dt, self.sigma_m - dt)


def classify_jumps(timers: Timers, b: int, timing: TimingConfig) -> JumpLabel:
    """Return every jump set the state (timers, b) belongs to.

    Overlaps are reported as combined flags; an empty result means the state
    is in the flow set only.
    """
    label = JumpLabel.NONE
    if timers.sigma_m <= 0.0:
        label |= JumpLabel.MEASURE
    if timers.sigma_s <= 0.0:
        if b == 1 and timers.sigma_a <= 0.0 and timers.sigma_m >= timing.T_m:
            label |= JumpLabel.ACTUATE
        if timers.sigma_a >= 0.0 or timers.sigma_m <= timing.T_m or b == 0:
            label |= JumpLabel.SAMPLE_RESET
    return label


def is_impulse_opportunity(timers: Timers, timing: TimingConfig) -> bool:
    """Sample where an impulse is *permitted* (boundary slices included)."""
    return (
        timers.sigma_s <= 0.0
        and timers.sigma_a <= 0.0
        and timers.sigma_m >= timing.T_m
    )


def is_guaranteed_opportunity(timers: Timers, timing: TimingConfig) -> bool:
    """Sample strictly inside the actuate set: the impulse cannot be lost
    to the nondeterministic boundary resolution."""
    return (
        timers.sigma_s <= 0.0
        and timers.sigma_a < 0.0
        and timers.sigma_m > timing.T_m
    )


def horizon_delta1(sigma_m: float, timing: TimingConfig) -> float:
    """Coast look-ahead: how long the state must stay certified if no
    impulse is applied now.

    Within sigma_m <= T_m + T_s of the next measurement the controller may
    be locked out through the blackout and one extra sample, so it must
    cover sigma_m + T_s; otherwise one sampling period suffices.
    """
    if sigma_m <= timing.T_m + timing.T_s:
        return sigma_m + timing.T_s
    return timing.T_s


def horizon_delta2(sigma_m: float, timing: TimingConfig) -> float:
    """Post-impulse look-ahead: dwell plus the same lockout reasoning.

    After an impulse the dwell clock resets to T_a, and if the measurement
    lands inside the dwell the blackout can extend the lockout, hence the
    max(sigma_m, T_a) branch near a measurement.
    """
    if sigma_m <= timing.T_a + timing.T_m + timing.T_s:
        return max(sigma_m, timing.T_a) + timing.T_s
    return timing.T_a + timing.T_s


def delta_r(timing: TimingConfig) -> float:
    """Recovery horizon T_a + T_m + 2*T_s: a uniform upper bound on both
    look-aheads over all clock values, used by the offline verifier."""
    return timing.T_a + timing.T_m + 2.0 * timing.T_s


def dominates_horizons(timing: TimingConfig, n_grid: int = 2001) -> float:
    """Max of delta1, delta2 over a sigma_m grid; <= delta_r always."""
    worst = 0.0
    for i in range(n_grid):
        sm = timing.T_M * i / (n_grid - 1)
        worst = max(
            worst, horizon_delta1(sm, timing), horizon_delta2(sm, timing)
        )
    return worst


def next_event_dt(timers: Timers) -> float:
    """Time to the nearest enabled clock crossing (sample or measurement)."""
    dts = [timers.sigma_s, timers.sigma_m]
    dt = min(d for d in dts)
    return max(dt, 0.0)


def roundtrip_time(t0: float, k: int, T_s: float) -> float:
    """k-th sample instant computed from scratch (no accumulation drift)."""
    return t0 + k * T_s


def isclose_time(a: float, b: float, tol: float = 1e-9) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)

"""Optimal velocity model car-following controller.

Maps gap and relative speed to a longitudinal acceleration command; the RL
agents act by switching the (alpha, beta) feedback gains of this law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .vehicle import U_MAX, U_MIN


@dataclass(frozen=True)
class OvmParams:
    """Gains and headway profile of the optimal velocity law.

    alpha: gain on the headway velocity error, 1/s.
    beta: gain on the velocity difference to the predecessor, 1/s.
    d_stop: gap (m) at and below which the desired velocity is zero.
    d_go: gap (m) at and above which the desired velocity is v_max.
    v_max: free-flow desired velocity, m/s.
    """

    alpha: float = 0.5
    beta: float = 0.5
    d_stop: float = 5.0
    d_go: float = 35.0
    v_max: float = 30.0

    def __post_init__(self) -> None:
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ValueError("OvmParams gains must be non-negative")
        if not 0.0 < self.d_stop < self.d_go:
            raise ValueError("OvmParams requires 0 < d_stop < d_go")
        if self.v_max <= 0.0:
            raise ValueError("OvmParams.v_max must be strictly positive")


def headway_velocity(params: OvmParams, d: float) -> float:
    """Desired velocity for gap d: 0 below d_stop, v_max above d_go, and a
    half-cosine ramp in between. Continuous and non-decreasing in d."""
    if not math.isfinite(d):
        raise ValueError("headway_velocity requires finite d")
    if d <= params.d_stop:
        return 0.0
    if d >= params.d_go:
        return params.v_max
    frac = (d - params.d_stop) / (params.d_go - params.d_stop)
    return 0.5 * params.v_max * (1.0 - math.cos(math.pi * frac))


def ovm_accel(params: OvmParams, d: float, v: float, v_prev: float) -> float:
    """Acceleration command u = alpha (v_h(d) - v) + beta (v_prev - v),
    clipped to the actuation box."""
    if not (math.isfinite(d) and math.isfinite(v) and math.isfinite(v_prev)):
        raise ValueError("ovm_accel requires finite inputs")
    u = params.alpha * (headway_velocity(params, d) - v) + params.beta * (v_prev - v)
    return min(max(u, U_MIN), U_MAX)

"""Longitudinal vehicle model: point-mass kinematics, drive power, energy surrogate.

Units are SI unless noted: distance m, velocity m/s, acceleration m/s^2,
force N, power kW (the one deliberate exception, matching how results are
reported downstream).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FitError

# Constraint box for every controlled vehicle.
V_MIN = 0.0
V_MAX = 30.0
U_MIN = -2.5
U_MAX = 2.5
MIN_SPACING = 1.0  # below this the platoon has collided

GRAVITY = 9.8


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of one vehicle.

    mass_kg: curb mass plus payload.
    rolling_coeff: dimensionless rolling resistance coefficient.
    air_density: kg/m^3.
    drag_coeff: dimensionless aerodynamic drag coefficient.
    frontal_area_m2: projected frontal area.
    wheel_radius_m: effective tire rolling radius.
    gear_ratio: overall reduction, motor shaft to wheel.
    drivetrain_eff: one-way drivetrain efficiency in (0, 1].
    """

    mass_kg: float = 1718.4
    rolling_coeff: float = 0.011
    air_density: float = 1.206
    drag_coeff: float = 0.32
    frontal_area_m2: float = 2.455
    wheel_radius_m: float = 0.337
    gear_ratio: float = 3.91 * 4.14
    drivetrain_eff: float = 0.9

    def __post_init__(self) -> None:
        for name in (
            "mass_kg",
            "rolling_coeff",
            "air_density",
            "drag_coeff",
            "frontal_area_m2",
            "wheel_radius_m",
            "gear_ratio",
        ):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"VehicleParams.{name} must be strictly positive")
        if not 0.0 < self.drivetrain_eff <= 1.0:
            raise ValueError("VehicleParams.drivetrain_eff must be in (0, 1]")


@dataclass(frozen=True)
class VehicleState:
    """Kinematic state of one platoon member.

    spacing_m: bumper gap to the preceding vehicle.
    velocity_mps: own longitudinal velocity, clipped to [V_MIN, V_MAX].
    accel_mps2: acceleration applied over the last step, clipped to [U_MIN, U_MAX].
    """

    spacing_m: float
    velocity_mps: float
    accel_mps2: float


def _travel(v: float, u: float, dt: float) -> tuple[float, float]:
    """Distance covered and final velocity over dt under constant u.

    The velocity trajectory is clipped to [V_MIN, V_MAX]: once the bound is
    hit the vehicle holds it for the remainder of the step, and the distance
    integral accounts for that exactly.
    """
    if u == 0.0:
        return v * dt, v
    v_end = v + u * dt
    if V_MIN <= v_end <= V_MAX:
        return v * dt + 0.5 * u * dt * dt, v_end
    bound = V_MAX if v_end > V_MAX else V_MIN
    t_hit = (bound - v) / u
    t_hit = min(max(t_hit, 0.0), dt)
    dist = v * t_hit + 0.5 * u * t_hit * t_hit + bound * (dt - t_hit)
    return dist, bound


def step_kinematics(
    state: VehicleState,
    v_prev: float,
    u_prev: float,
    u_cmd: float,
    dt: float,
) -> VehicleState:
    """Advance one vehicle by dt behind a predecessor moving at (v_prev, u_prev).

    The commanded acceleration is clipped to the actuation box, own velocity
    to [V_MIN, V_MAX]. Spacing integrates both trajectories exactly under
    piecewise-constant acceleration:

        d' = d + (v_prev - v) dt + (u_prev - u) dt^2 / 2

    with the own-velocity clip, when it binds, integrated consistently
    (velocity held at the bound for the clipped portion of the step).
    """
    inputs = (state.spacing_m, state.velocity_mps, v_prev, u_prev, u_cmd, dt)
    if not all(math.isfinite(x) for x in inputs):
        raise ValueError("step_kinematics requires finite inputs")
    if dt <= 0.0:
        raise ValueError("step_kinematics requires dt > 0")
    u = min(max(u_cmd, U_MIN), U_MAX)
    dist_self, v_new = _travel(state.velocity_mps, u, dt)
    dist_prev = v_prev * dt + 0.5 * u_prev * dt * dt
    return VehicleState(
        spacing_m=state.spacing_m + dist_prev - dist_self,
        velocity_mps=v_new,
        accel_mps2=u,
    )


def driving_force(params: VehicleParams, v: float, u: float) -> float:
    """Tractive force in N at velocity v and acceleration u on flat road.

    Sum of inertial force, rolling resistance, and aerodynamic drag:

        F = m u + m g f + (1/2) rho A_f C_d v^2
    """
    if not (math.isfinite(v) and math.isfinite(u)):
        raise ValueError("driving_force requires finite v and u")
    rolling = params.mass_kg * GRAVITY * params.rolling_coeff
    drag = 0.5 * params.air_density * params.frontal_area_m2 * params.drag_coeff * v * v
    return params.mass_kg * u + rolling + drag


def electric_power(params: VehicleParams, v: float, u: float) -> float:
    """Battery-side electric power in kW at operating point (v, u).

    Wheel power F*v is divided by the drivetrain efficiency when driving and
    multiplied by it when braking, so regeneration recovers only a fraction
    of the wheel power:

        P = F v / eta   if F v >= 0
        P = F v * eta   otherwise
    """
    wheel_w = driving_force(params, v, u) * v
    if wheel_w >= 0.0:
        battery_w = wheel_w / params.drivetrain_eff
    else:
        battery_w = wheel_w * params.drivetrain_eff
    return battery_w / 1000.0


@dataclass(frozen=True)
class EnergyPoly:
    """Bivariate quartic surrogate of electric_power over the operating box.

    coeffs[k, j] multiplies v^k * u^j; evaluation and serialization are
    row-major (k outer, j inner).
    """

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (5, 5):
            raise ValueError("EnergyPoly.coeffs must have shape (5, 5)")
        if not np.all(np.isfinite(c)):
            raise ValueError("EnergyPoly.coeffs must be finite")
        object.__setattr__(self, "coeffs", c)

    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1).copy()


def eval_energy_poly(poly: EnergyPoly, v: float, u: float) -> float:
    """Evaluate the surrogate at (v, u) in kW via nested Horner."""
    acc = 0.0
    for row in poly.coeffs[::-1]:
        inner = 0.0
        for c in row[::-1]:
            inner = inner * u + c
        acc = acc * v + inner
    return acc


def _poly_design(v: np.ndarray, u: np.ndarray) -> np.ndarray:
    cols = [v**k * u**j for k in range(5) for j in range(5)]
    return np.stack(cols, axis=1)


def fit_energy_poly(
    params: VehicleParams,
    n_v: int = 61,
    n_u: int = 51,
) -> tuple[EnergyPoly, float]:
    """Least-squares fit of the 5x5 surrogate on a regular (v, u) grid.

    The grid spans v in [V_MIN, V_MAX] (n_v points) by u in [U_MIN, U_MAX]
    (n_u points). Returns the fitted surface and its RMSE in kW against
    electric_power on that grid. Fewer than 5 distinct samples per axis
    cannot identify a quartic and raises FitError.
    """
    if n_v < 5 or n_u < 5:
        raise FitError("fit grid needs at least 5 points per axis for a quartic")
    v_grid = np.linspace(V_MIN, V_MAX, n_v)
    u_grid = np.linspace(U_MIN, U_MAX, n_u)
    vv, uu = np.meshgrid(v_grid, u_grid, indexing="ij")
    v_flat = vv.reshape(-1)
    u_flat = uu.reshape(-1)
    target = np.array(
        [electric_power(params, v, u) for v, u in zip(v_flat, u_flat)]
    )
    design = _poly_design(v_flat, u_flat)
    coeffs, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < 25:
        raise FitError(f"degenerate fit: design rank {rank} < 25")
    poly = EnergyPoly(coeffs.reshape(5, 5))
    resid = design @ coeffs - target
    rmse = float(np.sqrt(np.mean(resid**2)))
    return poly, rmse

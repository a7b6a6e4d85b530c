"""CACC platoon POMDP: observations, gain-switching actions, reward, termination.

Each controlled vehicle is an agent that picks one of four (alpha, beta) gain
pairs for the car-following law each step. The platoon is led either by a
virtual target car (every vehicle is an agent) or by a replayed velocity
trace (vehicle 0 follows the trace and is not an agent).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .ovm import OvmParams, headway_velocity, ovm_accel
from .vehicle import (
    MIN_SPACING,
    U_MAX,
    VehicleParams,
    VehicleState,
    electric_power,
    step_kinematics,
)

# Discrete action set: (alpha, beta) gain pairs for the car-following law.
ACTION_GAINS: tuple[tuple[float, float], ...] = (
    (0.0, 0.0),
    (0.5, 0.0),
    (0.0, 0.5),
    (0.5, 0.5),
)
N_ACTIONS = len(ACTION_GAINS)

OBS_MODES = ("ia2c", "fprint")
LEADER_MODES = ("virtual-target", "trace-replay")

_OWN_DIM = 5


def obs_dim_for(mode: str) -> int:
    """Observation vector length: own 5-vector plus front/rear neighbor
    5-vectors (15), plus front/rear policy fingerprints in fprint mode (23)."""
    if mode == "ia2c":
        return 3 * _OWN_DIM
    if mode == "fprint":
        return 3 * _OWN_DIM + 2 * N_ACTIONS
    raise ConfigError(f"unknown obs_mode {mode!r}")


@dataclass(frozen=True)
class Perturbation:
    """Leader-target dip: the virtual car's velocity ramps linearly down to
    depth * v_star over the first half of `duration_s`, then back up."""

    start_s: float = 20.0
    depth: float = 0.6
    duration_s: float = 10.0

    def __post_init__(self) -> None:
        if self.start_s < 0.0:
            raise ConfigError("Perturbation.start_s must be non-negative")
        if not 0.0 < self.depth <= 1.0:
            raise ConfigError("Perturbation.depth must be in (0, 1]")
        if self.duration_s <= 0.0:
            raise ConfigError("Perturbation.duration_s must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    """One training/evaluation scenario.

    n_vehicles counts every simulated vehicle including a replayed leader.
    Initial spacings are d_star * (1 + U(-jitter, jitter)), velocities
    v_star * (1 + U(-jitter, jitter)), fully determined by `seed`.
    """

    n_vehicles: int = 4
    d_star: float = 20.0
    v_star: float = 15.0
    dt: float = 0.1
    episode_steps: int = 600
    leader_mode: str = "virtual-target"
    perturbation: Perturbation | None = field(default_factory=Perturbation)
    init_spacing_jitter: float = 0.15
    init_velocity_jitter: float = 0.10
    seed: int = 0

    def __post_init__(self) -> None:
        if not 2 <= self.n_vehicles <= 64:
            raise ConfigError("ScenarioConfig.n_vehicles must be in [2, 64]")
        if self.d_star <= 0.0:
            raise ConfigError("ScenarioConfig.d_star must be positive")
        if not 0.0 < self.v_star <= 30.0:
            raise ConfigError("ScenarioConfig.v_star must be in (0, 30]")
        if self.dt <= 0.0 or self.dt > 1.0:
            raise ConfigError("ScenarioConfig.dt must be in (0, 1]")
        if self.episode_steps < 1:
            raise ConfigError("ScenarioConfig.episode_steps must be >= 1")
        if self.leader_mode not in LEADER_MODES:
            raise ConfigError(f"unknown leader_mode {self.leader_mode!r}")
        for name in ("init_spacing_jitter", "init_velocity_jitter"):
            if not 0.0 <= getattr(self, name) <= 0.9:
                raise ConfigError(f"ScenarioConfig.{name} must be in [0, 0.9]")
        if self.seed < 0:
            raise ConfigError("ScenarioConfig.seed must be non-negative")


@dataclass(frozen=True)
class RewardWeights:
    """Reward term weights (all penalties are negative weights on squared
    errors), safety gap, collision penalty, and the power normalizer in kW."""

    w_spacing: float = -1.0
    w_velocity: float = -1.0
    w_accel: float = -0.1
    w_safety: float = -5.0
    w_power: float = -10.0
    d_safe: float = 5.0
    collision_penalty: float = 1000.0
    power_norm: float = 135.0

    def __post_init__(self) -> None:
        if self.collision_penalty <= 0.0:
            raise ConfigError("RewardWeights.collision_penalty must be positive")
        if self.power_norm <= 0.0:
            raise ConfigError("RewardWeights.power_norm must be positive")
        if self.d_safe <= 0.0:
            raise ConfigError("RewardWeights.d_safe must be positive")


def compute_reward(
    weights: RewardWeights,
    d: float,
    v: float,
    u: float,
    power_kw: float,
    d_star: float,
    v_star: float,
) -> float:
    """Multi-objective step reward:

        w_spacing (d - d*)^2 + w_velocity (v - v*)^2 + w_accel u^2
        + w_safety max(0, 2 d_safe - d)^2 + w_power (P / power_norm)

    The safety term activates only once the gap falls below twice d_safe.
    The collision penalty is applied by the environment, not here.
    """
    safety_gap = max(0.0, 2.0 * weights.d_safe - d)
    return (
        weights.w_spacing * (d - d_star) ** 2
        + weights.w_velocity * (v - v_star) ** 2
        + weights.w_accel * u**2
        + weights.w_safety * safety_gap**2
        + weights.w_power * (power_kw / weights.power_norm)
    )


@dataclass(frozen=True)
class Observation:
    """Per-agent observation blocks; assemble with vector(mode).

    own: [v_hat, v_diff_hat, v_headway_hat, d_hat, u_hat].
    front/rear: the neighbor agents' own 5-vectors, zeros past platoon ends
    or where the neighbor is not an agent.
    front_fp/rear_fp: the neighbors' previous-step policy distributions.
    """

    own: np.ndarray
    front: np.ndarray
    rear: np.ndarray
    front_fp: np.ndarray
    rear_fp: np.ndarray

    def vector(self, mode: str) -> np.ndarray:
        if mode == "ia2c":
            return np.concatenate([self.own, self.front, self.rear])
        if mode == "fprint":
            return np.concatenate(
                [self.own, self.front, self.rear, self.front_fp, self.rear_fp]
            )
        raise ConfigError(f"unknown obs_mode {mode!r}")


@dataclass(frozen=True)
class StepOutcome:
    """Result of one synchronous platoon step. info arrays are per-agent;
    done is set on collision or when the step budget is exhausted."""

    observations: list[Observation]
    rewards: np.ndarray
    done: bool
    collision: bool
    info: dict[str, np.ndarray]


@dataclass
class VehicleLogRow:
    """Per-vehicle values of the last step, for rollout logs. spacing and
    reward are nan for a replayed leader."""

    vehicle: int
    spacing_m: float
    velocity_mps: float
    accel_mps2: float
    power_kw: float
    reward: float


class PlatoonEnv:
    """N-vehicle platoon simulator with per-agent observations and rewards.

    Single-threaded; run distinct instances for parallel scenarios. All
    randomness comes from the reset seed.
    """

    def __init__(
        self,
        cfg: ScenarioConfig,
        vehicle: VehicleParams | None = None,
        ovm: OvmParams | None = None,
        reward: RewardWeights | None = None,
        leader_profile: np.ndarray | None = None,
    ) -> None:
        self.cfg = cfg
        self.vehicle = vehicle if vehicle is not None else VehicleParams()
        self.ovm = ovm if ovm is not None else OvmParams()
        self.reward = reward if reward is not None else RewardWeights()
        if cfg.d_star <= self.ovm.d_stop:
            raise ConfigError("d_star must exceed the car-following stop gap")
        if cfg.leader_mode == "trace-replay":
            if leader_profile is None:
                raise ConfigError("trace-replay mode requires a leader profile")
            profile = np.asarray(leader_profile, dtype=float)
            if profile.ndim != 1 or profile.size < 2:
                raise ConfigError("leader profile must be a 1-D array, length >= 2")
            if not np.all(np.isfinite(profile)):
                raise ConfigError("leader profile must be finite")
            self._profile = profile
        else:
            self._profile = None
        self._states: list[VehicleState] = []
        self._v0: np.ndarray | None = None
        self._fingerprints: np.ndarray | None = None
        self._step_idx = 0
        self._done = True
        self._last_rows: list[VehicleLogRow] = []

    @property
    def n_vehicles(self) -> int:
        return self.cfg.n_vehicles

    @property
    def agent_vehicles(self) -> tuple[int, ...]:
        """Vehicle indices that are learning agents."""
        if self.cfg.leader_mode == "trace-replay":
            return tuple(range(1, self.cfg.n_vehicles))
        return tuple(range(self.cfg.n_vehicles))

    @property
    def n_agents(self) -> int:
        return len(self.agent_vehicles)

    @property
    def done(self) -> bool:
        return self._done

    def vehicle_log_rows(self) -> list[VehicleLogRow]:
        """Per-vehicle values of the most recent step (or of reset)."""
        return list(self._last_rows)

    def _target_velocity(self, t_s: float) -> float:
        """Virtual leader target velocity at time t_s."""
        v_star = self.cfg.v_star
        pert = self.cfg.perturbation
        if pert is None:
            return v_star
        t_rel = t_s - pert.start_s
        if t_rel < 0.0 or t_rel >= pert.duration_s:
            return v_star
        floor = pert.depth * v_star
        half = pert.duration_s / 2.0
        if t_rel < half:
            return v_star + (floor - v_star) * (t_rel / half)
        return floor + (v_star - floor) * ((t_rel - half) / half)

    def _leader_velocity(self, k: int) -> float:
        """Velocity of vehicle 0's predecessor (virtual car or trace) at
        step index k."""
        if self._profile is not None:
            return float(self._profile[min(k, self._profile.size - 1)])
        return self._target_velocity(k * self.cfg.dt)

    def reset(self, seed: int | None = None) -> list[Observation]:
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        spacing = cfg.d_star * (
            1.0 + rng.uniform(-cfg.init_spacing_jitter, cfg.init_spacing_jitter, cfg.n_vehicles)
        )
        velocity = cfg.v_star * (
            1.0 + rng.uniform(-cfg.init_velocity_jitter, cfg.init_velocity_jitter, cfg.n_vehicles)
        )
        if self._profile is not None:
            velocity[0] = self._profile[0]
            spacing[0] = math.nan
        self._states = [
            VehicleState(spacing_m=float(d), velocity_mps=float(v), accel_mps2=0.0)
            for d, v in zip(spacing, velocity)
        ]
        self._v0 = velocity.copy()
        self._fingerprints = np.full((self.n_agents, N_ACTIONS), 1.0 / N_ACTIONS)
        self._step_idx = 0
        self._done = False
        self._last_rows = [
            VehicleLogRow(
                vehicle=i,
                spacing_m=s.spacing_m,
                velocity_mps=s.velocity_mps,
                accel_mps2=0.0,
                power_kw=electric_power(self.vehicle, s.velocity_mps, 0.0),
                reward=math.nan,
            )
            for i, s in enumerate(self._states)
        ]
        return self._build_observations()

    def _own_vector(self, vehicle_idx: int, v_prev: float) -> np.ndarray:
        s = self._states[vehicle_idx]
        cfg = self.cfg
        v0 = float(self._v0[vehicle_idx])
        v_hat = (s.velocity_mps - v0) / v0
        v_diff = float(np.clip((v_prev - s.velocity_mps) / 5.0, -2.0, 2.0))
        v_head = float(
            np.clip(
                (headway_velocity(self.ovm, s.spacing_m) - s.velocity_mps) / 5.0,
                -2.0,
                2.0,
            )
        )
        d_hat = (
            s.spacing_m + (v_prev - s.velocity_mps) * cfg.dt - cfg.d_star
        ) / cfg.d_star
        u_hat = s.accel_mps2 / U_MAX
        return np.array([v_hat, v_diff, v_head, d_hat, u_hat])

    def _build_observations(self) -> list[Observation]:
        agents = self.agent_vehicles
        k = self._step_idx
        # Predecessor velocity per vehicle at the current time.
        v_prev = np.empty(self.n_vehicles)
        v_prev[0] = self._leader_velocity(k)
        for i in range(1, self.n_vehicles):
            v_prev[i] = self._states[i - 1].velocity_mps
        own = {i: self._own_vector(i, float(v_prev[i])) for i in agents}
        zeros5 = np.zeros(_OWN_DIM)
        zeros_fp = np.zeros(N_ACTIONS)
        obs = []
        for a, i in enumerate(agents):
            front_i, rear_i = i - 1, i + 1
            front = own.get(front_i, zeros5) if front_i >= 0 else zeros5
            rear = own.get(rear_i, zeros5) if rear_i < self.n_vehicles else zeros5
            front_fp = zeros_fp
            rear_fp = zeros_fp
            if front_i in agents:
                front_fp = self._fingerprints[agents.index(front_i)]
            if rear_i in agents:
                rear_fp = self._fingerprints[agents.index(rear_i)]
            obs.append(
                Observation(
                    own=own[i],
                    front=front.copy(),
                    rear=rear.copy(),
                    front_fp=front_fp.copy(),
                    rear_fp=rear_fp.copy(),
                )
            )
        return obs

    def step(
        self,
        actions: Sequence[int],
        fingerprints: np.ndarray | Sequence[np.ndarray] | None = None,
    ) -> StepOutcome:
        """Advance the platoon one dt with one action per agent.

        fingerprints, when given, are the policy distributions the agents
        just acted from; they appear in the neighbors' next observations.
        """
        if self._done:
            raise RuntimeError("step() called on a finished episode; reset() first")
        cfg = self.cfg
        agents = self.agent_vehicles
        if len(actions) != len(agents):
            raise ValueError(f"expected {len(agents)} actions, got {len(actions)}")
        for a in actions:
            if not 0 <= int(a) < N_ACTIONS:
                raise ValueError(f"action index {a} out of range")
        if fingerprints is not None:
            fp = np.asarray(fingerprints, dtype=float)
            if fp.shape != (len(agents), N_ACTIONS):
                raise ValueError(
                    f"expected fingerprints shape {(len(agents), N_ACTIONS)}"
                )
            self._fingerprints = fp.copy()

        k = self._step_idx
        dt = cfg.dt
        # Gain-law accelerations from the pre-step snapshot.
        u_cmd = np.zeros(self.n_vehicles)
        v_now = np.array([s.velocity_mps for s in self._states])
        lead_v_now = self._leader_velocity(k)
        lead_v_next = self._leader_velocity(k + 1)
        for a, i in enumerate(agents):
            alpha, beta = ACTION_GAINS[int(actions[a])]
            gains = OvmParams(
                alpha=alpha,
                beta=beta,
                d_stop=self.ovm.d_stop,
                d_go=self.ovm.d_go,
                v_max=self.ovm.v_max,
            )
            v_ahead = lead_v_now if i == 0 else v_now[i - 1]
            u_cmd[i] = ovm_accel(
                gains, self._states[i].spacing_m, v_now[i], float(v_ahead)
            )

        # Advance front to back so each follower sees its predecessor's
        # realized average acceleration (exact for unclipped predecessors).
        new_states: list[VehicleState] = []
        prev_v = lead_v_now
        prev_u = (lead_v_next - lead_v_now) / dt
        for i in range(self.n_vehicles):
            if i == 0 and self._profile is not None:
                new_states.append(
                    VehicleState(
                        spacing_m=math.nan,
                        velocity_mps=lead_v_next,
                        accel_mps2=prev_u,
                    )
                )
            else:
                new_states.append(
                    step_kinematics(self._states[i], prev_v, prev_u, float(u_cmd[i]), dt)
                )
            prev_v = self._states[i].velocity_mps
            prev_u = (new_states[i].velocity_mps - prev_v) / dt
        self._states = new_states
        self._step_idx = k + 1

        power_all = np.array(
            [electric_power(self.vehicle, s.velocity_mps, s.accel_mps2) for s in new_states]
        )
        rewards = np.empty(len(agents))
        collision = False
        for a, i in enumerate(agents):
            s = new_states[i]
            r = compute_reward(
                self.reward,
                s.spacing_m,
                s.velocity_mps,
                s.accel_mps2,
                float(power_all[i]),
                cfg.d_star,
                cfg.v_star,
            )
            if s.spacing_m <= MIN_SPACING:
                collision = True
                r -= self.reward.collision_penalty
            rewards[a] = r
        done = collision or self._step_idx >= cfg.episode_steps
        self._done = done

        self._last_rows = []
        for i, s in enumerate(new_states):
            if i in agents:
                r_i = float(rewards[agents.index(i)])
            else:
                r_i = math.nan
            self._last_rows.append(
                VehicleLogRow(
                    vehicle=i,
                    spacing_m=s.spacing_m,
                    velocity_mps=s.velocity_mps,
                    accel_mps2=s.accel_mps2,
                    power_kw=float(power_all[i]),
                    reward=r_i,
                )
            )
        info = {
            "power_kw": power_all[list(agents)],
            "spacing_m": np.array([new_states[i].spacing_m for i in agents]),
            "velocity_mps": np.array([new_states[i].velocity_mps for i in agents]),
            "accel_mps2": np.array([new_states[i].accel_mps2 for i in agents]),
        }
        return StepOutcome(
            observations=self._build_observations(),
            rewards=rewards,
            done=done,
            collision=collision,
            info=info,
        )

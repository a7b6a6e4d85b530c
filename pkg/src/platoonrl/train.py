"""Decentralized advantage actor-critic training and evaluation.

Each agent owns a recurrent actor-critic network and trains on its own local
reward; coordination happens only through the chosen weight-consensus
protocol, applied between episodes. One batch = one full episode, with the
LSTM carry reset at every episode start.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .consensus import (
    ConsensusConfig,
    apply_consensus,
    comm_bits_per_round,
    qsgd_step,
)
from .env import (
    N_ACTIONS,
    OBS_MODES,
    PlatoonEnv,
    RewardWeights,
    ScenarioConfig,
    obs_dim_for,
)
from .errors import ConfigError
from .ovm import OvmParams
from .vehicle import MIN_SPACING, VehicleParams


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    obs_mode selects the observation assembly ('ia2c' or 'fprint').
    normalize_advantages standardizes advantages per agent per episode
    before the actor loss. compress_gradients swaps the plain SGD update for
    the ternary-quantized error-feedback step. checkpoint_every counts
    episodes; 0 writes only the final checkpoint.
    """

    total_steps: int = 600_000
    gamma: float = 0.99
    actor_lr: float = 5.0e-4
    critic_lr: float = 2.5e-4
    entropy_coeff: float = 0.01
    grad_clip: float = 5.0
    obs_mode: str = "ia2c"
    consensus: ConsensusConfig = field(default_factory=ConsensusConfig)
    eval_seeds: int = 20
    checkpoint_every: int = 0
    normalize_advantages: bool = True
    compress_gradients: bool = False

    def __post_init__(self) -> None:
        if self.total_steps < 1:
            raise ConfigError("TrainConfig.total_steps must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("TrainConfig.gamma must be in (0, 1)")
        if self.actor_lr <= 0.0 or self.critic_lr <= 0.0:
            raise ConfigError("TrainConfig learning rates must be positive")
        if self.entropy_coeff < 0.0:
            raise ConfigError("TrainConfig.entropy_coeff must be non-negative")
        if self.grad_clip <= 0.0:
            raise ConfigError("TrainConfig.grad_clip must be positive")
        if self.obs_mode not in OBS_MODES:
            raise ConfigError(f"unknown obs_mode {self.obs_mode!r}")
        if self.eval_seeds < 1:
            raise ConfigError("TrainConfig.eval_seeds must be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigError("TrainConfig.checkpoint_every must be >= 0")


@dataclass
class Trajectory:
    """One agent's episode: per-step observation vectors, sampled actions,
    rewards, value estimates, policies, done flags, and the forward records
    needed for backpropagation."""

    observations: list[np.ndarray] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    policies: list[np.ndarray] = field(default_factory=list)
    dones: list[bool] = field(default_factory=list)
    records: list[nn.ForwardRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass(frozen=True)
class LogRow:
    """One training-log line: cumulative env steps, across-agent mean of the
    agents' summed episode rewards, colliding-agent count, cumulative
    communication bits."""

    episode: int
    steps: int
    mean_reward: float
    collisions: int
    comm_bits_cum: int


@dataclass
class TrainResult:
    nets: list[nn.AgentNet]
    log: list[LogRow]
    comm_bits: int


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """G_t = r_t + gamma * G_{t+1}, bootstrapping 0 past the end."""
    rewards = np.asarray(rewards, dtype=float)
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(rewards.size - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def _actor_loss_grads(
    traj: Trajectory, advantages: np.ndarray, entropy_coeff: float
) -> list[tuple[np.ndarray, float]]:
    """d/dpolicy of  -sum_t A_t log pi(a_t) - entropy_coeff * sum_t H(pi_t)."""
    grads = []
    for t, policy in enumerate(traj.policies):
        dp = entropy_coeff * (np.log(policy) + 1.0)
        dp[traj.actions[t]] -= advantages[t] / policy[traj.actions[t]]
        grads.append((dp, 0.0))
    return grads


def _critic_loss_grads(
    traj: Trajectory, returns: np.ndarray
) -> list[tuple[np.ndarray, float]]:
    """d/dvalue of  sum_t (G_t - V_t)^2."""
    zeros = np.zeros(N_ACTIONS)
    return [
        (zeros, -2.0 * (returns[t] - traj.values[t])) for t in range(len(traj))
    ]


def _clipped_flat(grads: nn.GradBundle, clip: float) -> np.ndarray:
    flat = grads.flatten()
    norm = float(np.linalg.norm(flat))
    if norm > clip:
        flat = flat * (clip / norm)
    return flat


def _rollout(
    env: PlatoonEnv,
    nets: list[nn.AgentNet],
    obs_mode: str,
    rng: np.random.Generator | None,
    episode_seed: int | None,
) -> tuple[list[Trajectory], bool, int]:
    """Run one episode. Stochastic policy sampling when rng is given, greedy
    argmax (lowest index wins ties) otherwise. Returns (trajectories,
    collision flag, colliding-agent count)."""
    obs = env.reset(seed=episode_seed)
    n_agents = env.n_agents
    hiddens = [nn.zero_hidden(net.hidden_dim) for net in nets]
    trajs = [Trajectory() for _ in range(n_agents)]
    collision = False
    collisions = 0
    while True:
        actions = []
        policies = []
        for i in range(n_agents):
            vec = obs[i].vector(obs_mode)
            policy, value, hiddens[i], record = nn.forward(nets[i], vec, hiddens[i])
            if rng is None:
                action = int(np.argmax(policy))
            else:
                action = int(rng.choice(N_ACTIONS, p=policy))
            trajs[i].observations.append(vec)
            trajs[i].actions.append(action)
            trajs[i].values.append(value)
            trajs[i].policies.append(policy)
            trajs[i].records.append(record)
            actions.append(action)
            policies.append(policy)
        fingerprints = np.array(policies) if obs_mode == "fprint" else None
        outcome = env.step(actions, fingerprints)
        for i in range(n_agents):
            trajs[i].rewards.append(float(outcome.rewards[i]))
            trajs[i].dones.append(outcome.done)
        if outcome.done:
            collision = outcome.collision
            if collision:
                collisions = int(np.sum(outcome.info["spacing_m"] <= MIN_SPACING))
            break
        obs = outcome.observations
    return trajs, collision, collisions


def _update_agent(
    cfg: TrainConfig,
    net: nn.AgentNet,
    traj: Trajectory,
    residuals: tuple[np.ndarray, np.ndarray] | None,
    episode: int,
    agent: int,
) -> tuple[np.ndarray, np.ndarray] | None:
    """One A2C update from one episode. Actor and critic gradients share the
    trunk but carry separate learning rates, so each gets its own backward
    pass and its own global-norm clip."""
    returns = discounted_returns(np.array(traj.rewards), cfg.gamma)
    advantages = returns - np.array(traj.values)
    if cfg.normalize_advantages:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    g_actor = nn.backward(net, traj.records, _actor_loss_grads(traj, advantages, cfg.entropy_coeff))
    g_critic = nn.backward(net, traj.records, _critic_loss_grads(traj, returns))
    flat_actor = _clipped_flat(g_actor, cfg.grad_clip)
    flat_critic = _clipped_flat(g_critic, cfg.grad_clip)
    if not (np.all(np.isfinite(flat_actor)) and np.all(np.isfinite(flat_critic))):
        raise RuntimeError(
            f"non-finite gradients at episode {episode}, agent {agent}"
        )
    if cfg.compress_gradients:
        assert residuals is not None
        res_a, res_c = residuals
        w = nn.flatten_params(net)
        w, res_a = qsgd_step(w, flat_actor, res_a, cfg.actor_lr, cfg.consensus.tau)
        w, res_c = qsgd_step(w, flat_critic, res_c, cfg.critic_lr, cfg.consensus.tau)
        nn.set_flat_params(net, w)
        return res_a, res_c
    w = nn.flatten_params(net) - cfg.actor_lr * flat_actor - cfg.critic_lr * flat_critic
    nn.set_flat_params(net, w)
    return residuals


def train(
    cfg: TrainConfig,
    scenario: ScenarioConfig,
    *,
    seed: int | None = None,
    vehicle: VehicleParams | None = None,
    ovm: OvmParams | None = None,
    reward: RewardWeights | None = None,
    leader_profile: np.ndarray | None = None,
    hidden_dim: int = 64,
    checkpoint_dir: str | Path | None = None,
) -> TrainResult:
    """Train all agents until total_steps env steps are consumed (the last
    episode runs to completion). All randomness derives from `seed`
    (scenario.seed when omitted), so identical inputs give bitwise-identical
    parameters and logs.
    """
    env = PlatoonEnv(scenario, vehicle, ovm, reward, leader_profile)
    if seed is None:
        seed = scenario.seed
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    obs_dim = obs_dim_for(cfg.obs_mode)
    nets = [
        nn.init_agent_net(obs_dim, hidden_dim, N_ACTIONS, rng)
        for _ in range(env.n_agents)
    ]
    n_params = nn.param_count(nets[0])
    residuals: list[tuple[np.ndarray, np.ndarray] | None]
    if cfg.compress_gradients:
        residuals = [(np.zeros(n_params), np.zeros(n_params)) for _ in nets]
    else:
        residuals = [None for _ in nets]
    log: list[LogRow] = []
    comm_bits = 0
    steps_done = 0
    episode = 0
    while steps_done < cfg.total_steps:
        episode += 1
        ep_seed = int(rng.integers(0, 2**63 - 1))
        trajs, _, collisions = _rollout(env, nets, cfg.obs_mode, rng, ep_seed)
        steps_done += len(trajs[0])
        for i, net in enumerate(nets):
            residuals[i] = _update_agent(
                cfg, net, trajs[i], residuals[i], episode, i
            )
        if cfg.consensus.protocol != "none" and episode % cfg.consensus.period == 0:
            weights = [nn.flatten_params(net) for net in nets]
            mixed = apply_consensus(
                cfg.consensus.protocol, weights, cfg.consensus.eps, cfg.consensus.tau
            )
            for net, w in zip(nets, mixed):
                nn.set_flat_params(net, w)
            comm_bits += comm_bits_per_round(
                cfg.consensus.protocol, n_params, env.n_agents
            )
        mean_reward = float(np.mean([sum(t.rewards) for t in trajs]))
        log.append(
            LogRow(
                episode=episode,
                steps=steps_done,
                mean_reward=mean_reward,
                collisions=collisions,
                comm_bits_cum=comm_bits,
            )
        )
        if (
            checkpoint_dir is not None
            and cfg.checkpoint_every > 0
            and episode % cfg.checkpoint_every == 0
        ):
            _save_checkpoints(nets, checkpoint_dir)
    if checkpoint_dir is not None:
        _save_checkpoints(nets, checkpoint_dir)
    return TrainResult(nets=nets, log=log, comm_bits=comm_bits)


def _save_checkpoints(nets: list[nn.AgentNet], directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, net in enumerate(nets):
        nn.save_params(net, directory / f"agent{i}.npz")


def load_checkpoints(directory: str | Path, n_agents: int) -> list[nn.AgentNet]:
    """Load agent{i}.npz for i in 0..n_agents-1 as written by train()."""
    directory = Path(directory)
    return [nn.load_params(directory / f"agent{i}.npz") for i in range(n_agents)]


def write_train_log(log: list[LogRow], path: str | Path) -> None:
    """Training log CSV; fixed float formatting keeps repeat runs
    byte-identical."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "steps", "mean_reward", "collisions", "comm_bits_cum"])
        for row in log:
            writer.writerow(
                [
                    row.episode,
                    row.steps,
                    f"{row.mean_reward:.6f}",
                    row.collisions,
                    row.comm_bits_cum,
                ]
            )


@dataclass(frozen=True)
class EvalRow:
    """Within-episode mean/std statistics of one evaluation rollout (or the
    across-seed aggregate when seed == 'all'): spacing and velocity over
    agent steps, |acceleration| over agent steps, platoon power over steps
    (summed across vehicles), episode energy, colliding-agent count."""

    seed: int | str
    ivs_mean_m: float
    ivs_std_m: float
    velocity_mean_mps: float
    velocity_std_mps: float
    accel_mean_mps2: float
    accel_std_mps2: float
    power_mean_kw: float
    power_std_kw: float
    energy_kwh: float
    collisions: int


@dataclass
class EvalReport:
    rows: list[EvalRow]
    aggregate: EvalRow

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "seed",
                    "ivs_mean_m",
                    "ivs_std_m",
                    "velocity_mean_mps",
                    "velocity_std_mps",
                    "accel_mean_mps2",
                    "accel_std_mps2",
                    "power_mean_kw",
                    "power_std_kw",
                    "energy_kwh",
                    "collisions",
                ]
            )
            for row in self.rows + [self.aggregate]:
                writer.writerow(
                    [row.seed]
                    + [
                        f"{x:.6f}"
                        for x in (
                            row.ivs_mean_m,
                            row.ivs_std_m,
                            row.velocity_mean_mps,
                            row.velocity_std_mps,
                            row.accel_mean_mps2,
                            row.accel_std_mps2,
                            row.power_mean_kw,
                            row.power_std_kw,
                            row.energy_kwh,
                        )
                    ]
                    + [row.collisions]
                )


def _greedy_episode(
    env: PlatoonEnv, nets: list[nn.AgentNet], obs_mode: str, seed: int
) -> tuple[EvalRow, list[list]]:
    """One greedy rollout; returns its statistics row and the per-step
    per-vehicle log rows. Platoon power and energy sum over all simulated
    vehicles; spacing/velocity/|accel| statistics cover the agents."""
    obs = env.reset(seed=seed)
    hiddens = [nn.zero_hidden(net.hidden_dim) for net in nets]
    spacings: list[np.ndarray] = []
    velocities: list[np.ndarray] = []
    accels: list[np.ndarray] = []
    step_rows: list[list] = []
    collisions = 0
    while True:
        actions = []
        policies = []
        for i in range(env.n_agents):
            policy, _, hiddens[i], _ = nn.forward(
                nets[i], obs[i].vector(obs_mode), hiddens[i]
            )
            actions.append(int(np.argmax(policy)))
            policies.append(policy)
        fingerprints = np.array(policies) if obs_mode == "fprint" else None
        outcome = env.step(actions, fingerprints)
        spacings.append(outcome.info["spacing_m"])
        velocities.append(outcome.info["velocity_mps"])
        accels.append(np.abs(outcome.info["accel_mps2"]))
        step_rows.append(env.vehicle_log_rows())
        if outcome.done:
            if outcome.collision:
                collisions = int(np.sum(outcome.info["spacing_m"] <= MIN_SPACING))
            break
        obs = outcome.observations
    sp = np.concatenate(spacings)
    ve = np.concatenate(velocities)
    ac = np.concatenate(accels)
    power = np.array([[r.power_kw for r in rows] for rows in step_rows])
    platoon_power = power.sum(axis=1)
    energy_kwh = float(power.sum() * env.cfg.dt / 3600.0)
    row = EvalRow(
        seed=seed,
        ivs_mean_m=float(sp.mean()),
        ivs_std_m=float(sp.std()),
        velocity_mean_mps=float(ve.mean()),
        velocity_std_mps=float(ve.std()),
        accel_mean_mps2=float(ac.mean()),
        accel_std_mps2=float(ac.std()),
        power_mean_kw=float(platoon_power.mean()),
        power_std_kw=float(platoon_power.std()),
        energy_kwh=energy_kwh,
        collisions=collisions,
    )
    return row, step_rows


def evaluate(
    nets: list[nn.AgentNet],
    scenario: ScenarioConfig,
    n_seeds: int,
    *,
    obs_mode: str = "ia2c",
    vehicle: VehicleParams | None = None,
    ovm: OvmParams | None = None,
    reward: RewardWeights | None = None,
    leader_profile: np.ndarray | None = None,
) -> EvalReport:
    """Greedy evaluation over seeds scenario.seed .. scenario.seed+n_seeds-1.

    Per-seed rows hold within-episode statistics; the aggregate row holds the
    across-seed mean of each mean, the across-seed std of each mean, the mean
    episode energy, and the total collision count.
    """
    if n_seeds < 1:
        raise ConfigError("evaluate requires n_seeds >= 1")
    env = PlatoonEnv(scenario, vehicle, ovm, reward, leader_profile)
    if len(nets) != env.n_agents:
        raise ConfigError(f"expected {env.n_agents} nets, got {len(nets)}")
    rows = []
    for k in range(n_seeds):
        row, _ = _greedy_episode(env, nets, obs_mode, scenario.seed + k)
        rows.append(row)
    def col(name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in rows])
    aggregate = EvalRow(
        seed="all",
        ivs_mean_m=float(col("ivs_mean_m").mean()),
        ivs_std_m=float(col("ivs_mean_m").std()),
        velocity_mean_mps=float(col("velocity_mean_mps").mean()),
        velocity_std_mps=float(col("velocity_mean_mps").std()),
        accel_mean_mps2=float(col("accel_mean_mps2").mean()),
        accel_std_mps2=float(col("accel_mean_mps2").std()),
        power_mean_kw=float(col("power_mean_kw").mean()),
        power_std_kw=float(col("power_mean_kw").std()),
        energy_kwh=float(col("energy_kwh").mean()),
        collisions=int(col("collisions").sum()),
    )
    return EvalReport(rows=rows, aggregate=aggregate)


@dataclass
class ProtocolRun:
    protocol: str
    log: list[LogRow]
    report: EvalReport
    comm_bits: int


def compare_protocols(
    cfg: TrainConfig,
    scenario: ScenarioConfig,
    protocols: list[str],
    *,
    seed: int | None = None,
    hidden_dim: int = 64,
) -> dict[str, ProtocolRun]:
    """Train one run per protocol with matched seed and scenario, then
    evaluate each; results share episode counts by construction."""
    if not protocols:
        raise ConfigError("compare_protocols requires at least one protocol")
    out: dict[str, ProtocolRun] = {}
    for protocol in protocols:
        run_cfg = replace(cfg, consensus=replace(cfg.consensus, protocol=protocol))
        result = train(run_cfg, scenario, seed=seed, hidden_dim=hidden_dim)
        report = evaluate(
            result.nets, scenario, run_cfg.eval_seeds, obs_mode=run_cfg.obs_mode
        )
        out[protocol] = ProtocolRun(
            protocol=protocol,
            log=result.log,
            report=report,
            comm_bits=result.comm_bits,
        )
    return out


def consensus_bench(
    protocols: Sequence[str] = ("bdc", "wac", "dcea"),
    n_agents: int = 4,
    n_params: int = 64,
    rounds: int = 500,
    eps: float = 0.01,
    tau: float = 0.0,
    seed: int = 0,
) -> list[tuple[int, str, float, int]]:
    """Mixing-protocol bench on random vectors over the line graph: rows of
    (round, protocol, spread, cumulative bits) where spread is the largest
    across-agent max-min gap over components. Round 0 is the initial state."""
    out = []
    for protocol in protocols:
        rng = np.random.default_rng(seed)
        weights = [rng.standard_normal(n_params) for _ in range(n_agents)]
        bits = 0
        stacked = np.array(weights)
        out.append((0, protocol, float((stacked.max(0) - stacked.min(0)).max()), bits))
        for r in range(1, rounds + 1):
            weights = apply_consensus(protocol, weights, eps, tau)
            bits += comm_bits_per_round(protocol, n_params, n_agents)
            stacked = np.array(weights)
            spread = float((stacked.max(0) - stacked.min(0)).max())
            out.append((r, protocol, spread, bits))
    return out


def write_consensus_bench(rows: list[tuple[int, str, float, int]], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "protocol", "spread", "bits_cumulative"])
        for rnd, protocol, spread, bits in rows:
            writer.writerow([rnd, protocol, f"{spread:.9f}", bits])

"""Decentralized multi-agent RL for cooperative adaptive cruise control.

Core pieces: a physics-faithful platoon simulator (vehicle, ovm, env),
bandwidth-constrained weight-consensus protocols (consensus), a from-scratch
recurrent actor-critic (nn), the training/evaluation harness (train), trace
ingestion (data), and a CLI (cli).
"""

from .config import (
    RunConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    resolve_output_dir,
    save_config,
)
from .consensus import (
    ConsensusConfig,
    NeighborGraph,
    apply_consensus,
    bdc_round,
    comm_bits_per_round,
    dcea_round,
    qsgd_step,
    ternary_quantize,
    wac_round,
)
from .data import (
    LeaderProfile,
    TraceTable,
    extract_window,
    load_profile,
    parse_trace_csv,
    resample,
    save_profile,
)
from .env import (
    ACTION_GAINS,
    Observation,
    Perturbation,
    PlatoonEnv,
    RewardWeights,
    ScenarioConfig,
    StepOutcome,
    compute_reward,
    obs_dim_for,
)
from .errors import ConfigError, DataError, FitError
from .nn import (
    AgentNet,
    GradBundle,
    Hidden,
    backward,
    flatten_params,
    forward,
    init_agent_net,
    load_params,
    param_count,
    save_params,
    set_flat_params,
    zero_hidden,
)
from .ovm import OvmParams, headway_velocity, ovm_accel
from .train import (
    EvalReport,
    EvalRow,
    LogRow,
    ProtocolRun,
    TrainConfig,
    TrainResult,
    Trajectory,
    compare_protocols,
    consensus_bench,
    discounted_returns,
    evaluate,
    load_checkpoints,
    train,
    write_consensus_bench,
    write_train_log,
)
from .vehicle import (
    EnergyPoly,
    VehicleParams,
    VehicleState,
    driving_force,
    electric_power,
    eval_energy_poly,
    fit_energy_poly,
    step_kinematics,
)

__version__ = "0.1.0"

__all__ = [
    "ACTION_GAINS",
    "AgentNet",
    "ConfigError",
    "ConsensusConfig",
    "DataError",
    "EnergyPoly",
    "EvalReport",
    "EvalRow",
    "FitError",
    "GradBundle",
    "Hidden",
    "LeaderProfile",
    "LogRow",
    "NeighborGraph",
    "Observation",
    "OvmParams",
    "Perturbation",
    "PlatoonEnv",
    "ProtocolRun",
    "RewardWeights",
    "RunConfig",
    "ScenarioConfig",
    "StepOutcome",
    "TraceTable",
    "TrainConfig",
    "TrainResult",
    "Trajectory",
    "VehicleParams",
    "VehicleState",
    "apply_consensus",
    "backward",
    "bdc_round",
    "comm_bits_per_round",
    "compare_protocols",
    "compute_reward",
    "config_from_dict",
    "config_to_dict",
    "consensus_bench",
    "dcea_round",
    "discounted_returns",
    "driving_force",
    "electric_power",
    "eval_energy_poly",
    "evaluate",
    "extract_window",
    "fit_energy_poly",
    "flatten_params",
    "forward",
    "headway_velocity",
    "init_agent_net",
    "load_checkpoints",
    "load_config",
    "load_params",
    "load_profile",
    "obs_dim_for",
    "ovm_accel",
    "param_count",
    "parse_trace_csv",
    "qsgd_step",
    "resample",
    "resolve_output_dir",
    "save_config",
    "save_params",
    "save_profile",
    "set_flat_params",
    "step_kinematics",
    "ternary_quantize",
    "train",
    "wac_round",
    "write_consensus_bench",
    "write_train_log",
    "zero_hidden",
]

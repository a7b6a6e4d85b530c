"""Command-line operator surface.

Subcommands: fit-energy, train, eval, replay, consensus-bench, sweep-size.
Exit codes: 0 success, 1 usage/config error, 2 runtime/data error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import nn
from .config import RunConfig, load_config, resolve_output_dir
from .env import N_ACTIONS, PlatoonEnv, obs_dim_for
from .errors import ConfigError, DataError, FitError
from .train import (
    EvalReport,
    consensus_bench,
    evaluate,
    load_checkpoints,
    train,
    write_consensus_bench,
    write_train_log,
)
from .vehicle import fit_energy_poly


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2; this contract wants 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="platoonrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: _Parser, config_required: bool) -> None:
        p.add_argument("--config", required=config_required, help="YAML run config")
        p.add_argument("--output-dir", help="override the config output directory")
        p.add_argument("--seed", type=int, help="override the run seed(s)")

    p = sub.add_parser("fit-energy", parents=[], help="fit the power surrogate")
    add_common(p, config_required=False)
    p.add_argument("--grid", default="61x51", help="fit grid as NVxNU, e.g. 61x51")

    p = sub.add_parser("train", help="train one run per configured seed")
    add_common(p, config_required=True)
    p.add_argument("--protocol", help="consensus protocol override")
    p.add_argument("--steps", type=int, help="total env steps override")
    p.add_argument("--n-vehicles", type=int, help="platoon size override")
    p.add_argument("--obs-mode", help="observation mode override (ia2c|fprint)")
    p.add_argument("--trace", help="trace CSV for trace-replay scenarios")
    p.add_argument("--window", help="trace window as t0:t1 seconds")
    p.add_argument("--leader-col", default="v1", help="trace leader column")

    p = sub.add_parser("eval", help="evaluate trained checkpoints")
    add_common(p, config_required=True)
    p.add_argument("--n-vehicles", type=int, help="platoon size override")
    p.add_argument("--obs-mode", help="observation mode override (ia2c|fprint)")
    p.add_argument("--checkpoint-dir", help="checkpoint directory to load")
    p.add_argument("--trace", help="trace CSV for trace-replay scenarios")
    p.add_argument("--window", help="trace window as t0:t1 seconds")
    p.add_argument("--leader-col", default="v1", help="trace leader column")

    p = sub.add_parser("replay", help="replay a recorded leader trace")
    add_common(p, config_required=True)
    p.add_argument("--trace", required=True, help="trace CSV path")
    p.add_argument("--window", required=True, help="trace window as t0:t1 seconds")
    p.add_argument("--leader-col", default="v1", help="trace leader column")
    p.add_argument("--n-vehicles", type=int, help="platoon size override")
    p.add_argument("--obs-mode", help="observation mode override (ia2c|fprint)")
    p.add_argument("--checkpoint-dir", help="checkpoint directory to load")

    p = sub.add_parser("consensus-bench", help="benchmark the mixing protocols")
    add_common(p, config_required=True)
    p.add_argument("--protocol", help="run a single protocol instead of all")
    p.add_argument("--rounds", type=int, default=500, help="mixing rounds")
    p.add_argument("--n-vehicles", type=int, help="agent count override")

    p = sub.add_parser("sweep-size", help="train/evaluate platoon sizes 2,4,6,8")
    add_common(p, config_required=True)
    p.add_argument("--protocol", help="consensus protocol override")
    p.add_argument("--steps", type=int, help="total env steps override")
    p.add_argument("--obs-mode", help="observation mode override (ia2c|fprint)")
    return parser


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    scenario = cfg.scenario
    train_cfg = cfg.train
    if getattr(args, "n_vehicles", None) is not None:
        scenario = replace(scenario, n_vehicles=args.n_vehicles)
    if getattr(args, "obs_mode", None) is not None:
        train_cfg = replace(train_cfg, obs_mode=args.obs_mode)
    if getattr(args, "protocol", None) is not None:
        train_cfg = replace(train_cfg, consensus=replace(train_cfg.consensus, protocol=args.protocol))
    if getattr(args, "steps", None) is not None:
        train_cfg = replace(train_cfg, total_steps=args.steps)
    seeds = cfg.seeds
    if args.seed is not None:
        seeds = [args.seed]
        scenario = replace(scenario, seed=args.seed)
    return replace(cfg, scenario=scenario, train=train_cfg, seeds=seeds)


def _parse_window(text: str) -> tuple[float, float]:
    try:
        t0_s, t1_s = text.split(":")
        return float(t0_s), float(t1_s)
    except ValueError:
        raise ConfigError(f"--window expects t0:t1, got {text!r}") from None


def _leader_profile(args: argparse.Namespace, cfg: RunConfig) -> np.ndarray | None:
    """Build the replayed-leader profile when the scenario needs one."""
    if cfg.scenario.leader_mode != "trace-replay":
        return None
    if getattr(args, "trace", None) is None:
        raise ConfigError("trace-replay scenarios require --trace")
    table = data_mod.parse_trace_csv(args.trace)
    if getattr(args, "window", None):
        t0, t1 = _parse_window(args.window)
    else:
        t0, t1 = float(table.times[0]), float(table.times[-1])
    profile = data_mod.extract_window(
        table, args.leader_col, t0, t1, cfg.scenario.dt
    )
    return profile.velocities


def _nets_for(
    cfg: RunConfig, checkpoint_dir: str | None, n_agents: int, seed: int
) -> tuple[list[nn.AgentNet], str]:
    """Load checkpoints when available, else fresh seeded networks."""
    obs_dim = obs_dim_for(cfg.train.obs_mode)
    if checkpoint_dir is not None and Path(checkpoint_dir).exists():
        return load_checkpoints(checkpoint_dir, n_agents), f"checkpoints from {checkpoint_dir}"
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    nets = [nn.init_agent_net(obs_dim, 64, N_ACTIONS, rng) for _ in range(n_agents)]
    return nets, "untrained networks (no checkpoint found)"


def _write_rollout_log(step_rows: list[list], path: Path) -> None:
    """Per-step per-vehicle rollout CSV; nan marks undefined fields of a
    replayed leader."""
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["step", "vehicle", "spacing_m", "velocity_mps", "accel_mps2", "power_kw", "reward"]
        )
        for step, rows in enumerate(step_rows, start=1):
            for r in rows:
                writer.writerow(
                    [
                        step,
                        r.vehicle,
                        f"{r.spacing_m:.6f}",
                        f"{r.velocity_mps:.6f}",
                        f"{r.accel_mps2:.6f}",
                        f"{r.power_kw:.6f}",
                        f"{r.reward:.6f}",
                    ]
                )


def _cmd_fit_energy(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    try:
        nv_s, nu_s = args.grid.lower().split("x")
        n_v, n_u = int(nv_s), int(nu_s)
    except ValueError:
        raise ConfigError(f"--grid expects NVxNU, got {args.grid!r}") from None
    poly, rmse = fit_energy_poly(cfg.vehicle, n_v, n_u)
    out = resolve_output_dir(cfg, args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "energy_poly.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"p{k}{j}" for k in range(5) for j in range(5)])
        writer.writerow([f"{c:.12e}" for c in poly.flat()])
    print(f"fit-energy: rmse_kw={rmse:.4f} grid={n_v}x{n_u} -> {path}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    profile = _leader_profile(args, cfg)
    out = resolve_output_dir(cfg, args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        t_start = time.perf_counter()
        result = train(
            cfg.train,
            cfg.scenario,
            seed=seed,
            vehicle=cfg.vehicle,
            ovm=cfg.ovm,
            reward=cfg.reward,
            leader_profile=profile,
            checkpoint_dir=out / "checkpoints" / f"seed{seed}",
        )
        log_path = out / f"train_log_seed{seed}.csv"
        write_train_log(result.log, log_path)
        wall_s = time.perf_counter() - t_start
        tail = result.log[-1]
        print(
            f"train: seed={seed} protocol={cfg.train.consensus.protocol} "
            f"episodes={tail.episode} steps={tail.steps} "
            f"final_reward={tail.mean_reward:.3f} comm_bits={tail.comm_bits_cum} "
            f"wall_s={wall_s:.1f} -> {log_path}"
        )
    return 0


def _run_eval(cfg: RunConfig, args: argparse.Namespace, profile: np.ndarray | None) -> EvalReport:
    env = PlatoonEnv(cfg.scenario, cfg.vehicle, cfg.ovm, cfg.reward, profile)
    seed = cfg.seeds[0]
    default_dir = resolve_output_dir(cfg, args.output_dir) / "checkpoints" / f"seed{seed}"
    checkpoint_dir = getattr(args, "checkpoint_dir", None) or str(default_dir)
    nets, source = _nets_for(cfg, checkpoint_dir, env.n_agents, seed)
    print(f"eval: using {source}")
    return evaluate(
        nets,
        cfg.scenario,
        cfg.train.eval_seeds,
        obs_mode=cfg.train.obs_mode,
        vehicle=cfg.vehicle,
        ovm=cfg.ovm,
        reward=cfg.reward,
        leader_profile=profile,
    )


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    profile = _leader_profile(args, cfg)
    out = resolve_output_dir(cfg, args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = _run_eval(cfg, args, profile)
    path = out / "eval_report.csv"
    report.to_csv(path)
    agg = report.aggregate
    print(
        f"eval: seeds={cfg.train.eval_seeds} ivs_mean_m={agg.ivs_mean_m:.3f} "
        f"velocity_mean_mps={agg.velocity_mean_mps:.3f} collisions={agg.collisions} -> {path}"
    )
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    from .train import _greedy_episode

    cfg = _load_run_config(args)
    scenario = replace(cfg.scenario, leader_mode="trace-replay")
    table = data_mod.parse_trace_csv(args.trace)
    t0, t1 = _parse_window(args.window)
    profile = data_mod.extract_window(table, args.leader_col, t0, t1, scenario.dt)
    scenario = replace(scenario, episode_steps=max(1, len(profile) - 1))
    out = resolve_output_dir(cfg, args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_mod.save_profile(profile, out / "leader_profile.csv")
    env = PlatoonEnv(scenario, cfg.vehicle, cfg.ovm, cfg.reward, profile.velocities)
    nets, source = _nets_for(cfg, args.checkpoint_dir, env.n_agents, cfg.seeds[0])
    print(f"replay: using {source}")
    row, step_rows = _greedy_episode(env, nets, cfg.train.obs_mode, scenario.seed)
    _write_rollout_log(step_rows, out / "replay_log.csv")
    stats = EvalReport(rows=[row], aggregate=row)
    stats_path = out / "replay_stats.csv"
    # Single-rollout stats: one data row plus the (identical) aggregate row.
    stats.to_csv(stats_path)
    print(
        f"replay: window={t0:g}:{t1:g} samples={len(profile)} steps={len(step_rows)} "
        f"ivs_mean_m={row.ivs_mean_m:.3f} power_mean_kw={row.power_mean_kw:.3f} "
        f"collisions={row.collisions} -> {out / 'replay_log.csv'}"
    )
    return 0


def _cmd_consensus_bench(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    protocols = [args.protocol] if args.protocol else ["bdc", "wac", "dcea"]
    n_agents = cfg.scenario.n_vehicles
    rows = consensus_bench(
        protocols=protocols,
        n_agents=n_agents,
        rounds=args.rounds,
        eps=cfg.train.consensus.eps,
        tau=cfg.train.consensus.tau,
        seed=cfg.seeds[0],
    )
    out = resolve_output_dir(cfg, args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "consensus_bench.csv"
    write_consensus_bench(rows, path)
    finals = {p: next(r[2] for r in reversed(rows) if r[1] == p) for p in protocols}
    summary = " ".join(f"{p}={s:.6f}" for p, s in finals.items())
    print(f"consensus-bench: rounds={args.rounds} agents={n_agents} final_spread {summary} -> {path}")
    return 0


def _cmd_sweep_size(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    out = resolve_output_dir(cfg, args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seeds[0]
    results = []
    for n in (2, 4, 6, 8):
        scenario = replace(cfg.scenario, n_vehicles=n)
        result = train(
            cfg.train,
            scenario,
            seed=seed,
            vehicle=cfg.vehicle,
            ovm=cfg.ovm,
            reward=cfg.reward,
        )
        write_train_log(result.log, out / f"train_log_n{n}_seed{seed}.csv")
        report = evaluate(
            result.nets,
            scenario,
            cfg.train.eval_seeds,
            obs_mode=cfg.train.obs_mode,
            vehicle=cfg.vehicle,
            ovm=cfg.ovm,
            reward=cfg.reward,
        )
        tail = result.log[-1]
        results.append((n, tail, report.aggregate))
        print(
            f"sweep-size: n={n} episodes={tail.episode} final_reward={tail.mean_reward:.3f} "
            f"ivs_mean_m={report.aggregate.ivs_mean_m:.3f} collisions={report.aggregate.collisions}"
        )
    path = out / "sweep_size.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n_vehicles", "episodes", "final_reward", "ivs_mean_m", "velocity_mean_mps",
             "energy_kwh", "collisions", "comm_bits_cum"]
        )
        for n, tail, agg in results:
            writer.writerow(
                [n, tail.episode, f"{tail.mean_reward:.6f}", f"{agg.ivs_mean_m:.6f}",
                 f"{agg.velocity_mean_mps:.6f}", f"{agg.energy_kwh:.6f}", agg.collisions,
                 tail.comm_bits_cum]
            )
    print(f"sweep-size: -> {path}")
    return 0


_COMMANDS = {
    "fit-energy": _cmd_fit_energy,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "replay": _cmd_replay,
    "consensus-bench": _cmd_consensus_bench,
    "sweep-size": _cmd_sweep_size,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FitError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

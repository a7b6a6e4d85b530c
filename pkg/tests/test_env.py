"""Platoon environment: observations, reward shape, termination, replay.

The steady-state reward constant is frozen from hand arithmetic: cruising at
15 m/s costs 291.8298 * 15 / 0.9 / 1000 = 4.86383 kW, and the power term is
the only nonzero one at the set point, so r = -10 * 4.86383 / 135 =
-0.3602837 per step.
"""

import math

import numpy as np
import pytest

from platoonrl.env import (
    ACTION_GAINS,
    N_ACTIONS,
    Perturbation,
    PlatoonEnv,
    RewardWeights,
    ScenarioConfig,
    compute_reward,
    obs_dim_for,
)
from platoonrl.errors import ConfigError

W = RewardWeights()

EQ_REWARD = -0.3602837


def quiet_scenario(**overrides):
    """A jitter-free, perturbation-free scenario starting on the set point."""
    base = dict(
        n_vehicles=3,
        episode_steps=50,
        perturbation=None,
        init_spacing_jitter=0.0,
        init_velocity_jitter=0.0,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


class TestScenarioConfig:
    def test_defaults_are_valid(self):
        cfg = ScenarioConfig()
        assert cfg.n_vehicles == 4
        assert cfg.d_star == 20.0
        assert cfg.v_star == 15.0
        assert cfg.leader_mode == "virtual-target"

    def test_rejects_single_vehicle(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(n_vehicles=1)

    def test_rejects_oversized_platoon(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(n_vehicles=65)

    def test_rejects_bad_v_star(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(v_star=0.0)
        with pytest.raises(ConfigError):
            ScenarioConfig(v_star=31.0)

    def test_rejects_bad_dt(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(dt=0.0)

    def test_rejects_unknown_leader_mode(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(leader_mode="convoy")

    def test_rejects_wild_jitter(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(init_spacing_jitter=0.95)

    def test_rejects_negative_seed(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(seed=-1)

    def test_perturbation_validation(self):
        with pytest.raises(ConfigError):
            Perturbation(depth=0.0)
        with pytest.raises(ConfigError):
            Perturbation(depth=1.2)
        assert Perturbation(depth=1.0).depth == 1.0

    def test_obs_dims(self):
        assert obs_dim_for("ia2c") == 15
        assert obs_dim_for("fprint") == 23
        with pytest.raises(ConfigError):
            obs_dim_for("full-state")


class TestComputeReward:
    def test_set_point_leaves_only_power_term(self):
        r = compute_reward(W, 20.0, 15.0, 0.0, 4.86383, 20.0, 15.0)
        assert r == pytest.approx(EQ_REWARD, abs=1e-6)

    def test_spacing_term(self):
        assert compute_reward(W, 18.0, 15.0, 0.0, 0.0, 20.0, 15.0) == pytest.approx(-4.0)

    def test_velocity_term(self):
        assert compute_reward(W, 20.0, 13.0, 0.0, 0.0, 20.0, 15.0) == pytest.approx(-4.0)

    def test_accel_term(self):
        assert compute_reward(W, 20.0, 15.0, 1.5, 0.0, 20.0, 15.0) == pytest.approx(-0.225)

    def test_safety_term_inactive_at_ten_meters(self):
        assert compute_reward(W, 10.0, 15.0, 0.0, 0.0, 20.0, 15.0) == pytest.approx(-100.0)

    def test_safety_term_active_below_ten_meters(self):
        # spacing -(8-20)^2 = -144 plus safety -5 * (10-8)^2 = -20
        assert compute_reward(W, 8.0, 15.0, 0.0, 0.0, 20.0, 15.0) == pytest.approx(-164.0)

    def test_regen_power_rewards(self):
        assert compute_reward(W, 20.0, 15.0, 0.0, -13.5, 20.0, 15.0) == pytest.approx(1.0)


class TestReset:
    def test_same_seed_reproduces_observations(self):
        env = PlatoonEnv(ScenarioConfig())
        a = env.reset(seed=9)
        b = env.reset(seed=9)
        for oa, ob in zip(a, b):
            assert np.array_equal(oa.vector("ia2c"), ob.vector("ia2c"))

    def test_different_seeds_differ(self):
        env = PlatoonEnv(ScenarioConfig())
        a = env.reset(seed=1)
        b = env.reset(seed=2)
        assert any(
            not np.array_equal(oa.vector("ia2c"), ob.vector("ia2c"))
            for oa, ob in zip(a, b)
        )

    def test_zero_jitter_starts_on_set_point(self):
        env = PlatoonEnv(quiet_scenario())
        env.reset()
        for row in env.vehicle_log_rows():
            assert row.spacing_m == 20.0
            assert row.velocity_mps == 15.0

    def test_observation_lengths(self):
        env = PlatoonEnv(ScenarioConfig())
        obs = env.reset()
        assert len(obs) == 4
        for o in obs:
            assert o.vector("ia2c").shape == (15,)
            assert o.vector("fprint").shape == (23,)

    def test_platoon_ends_zero_padded(self):
        env = PlatoonEnv(quiet_scenario())
        obs = env.reset()
        first = obs[0].vector("ia2c")
        last = obs[-1].vector("ia2c")
        assert np.array_equal(first[5:10], np.zeros(5)), "no vehicle ahead of 0"
        assert np.array_equal(last[10:15], np.zeros(5))

    def test_fingerprints_start_uniform(self):
        env = PlatoonEnv(quiet_scenario())
        obs = env.reset()
        middle = obs[1].vector("fprint")
        assert np.array_equal(middle[15:19], np.full(4, 0.25))
        assert np.array_equal(middle[19:23], np.full(4, 0.25))


class TestStep:
    def test_set_point_is_fixed(self):
        env = PlatoonEnv(quiet_scenario())
        env.reset()
        for _ in range(50):
            out = env.step([3, 3, 3])
            assert np.all(out.info["spacing_m"] == 20.0)
            assert np.all(out.info["velocity_mps"] == 15.0)
            for r in out.rewards:
                assert r == pytest.approx(EQ_REWARD, abs=1e-6)
        assert out.done and not out.collision

    def test_all_gain_pairs_hold_the_set_point(self):
        for action in range(N_ACTIONS):
            env = PlatoonEnv(quiet_scenario(episode_steps=5))
            env.reset()
            out = env.step([action] * 3)
            assert np.all(out.info["spacing_m"] == 20.0), f"action {action}"

    def test_episode_length_termination(self):
        env = PlatoonEnv(quiet_scenario(episode_steps=5))
        env.reset()
        for k in range(5):
            out = env.step([0, 0, 0])
            assert out.done == (k == 4)
        with pytest.raises(RuntimeError):
            env.step([0, 0, 0])

    def test_perturbation_dip_shape(self):
        # leader target: flat until t=1 s, floor 7.5 m/s at t=2 s, flat
        # again from t=3 s; agents coast (action 0) so their own velocity
        # stays 15 and the observed velocity gap traces the dip
        cfg = quiet_scenario(
            n_vehicles=2,
            episode_steps=40,
            perturbation=Perturbation(start_s=1.0, depth=0.5, duration_s=2.0),
        )
        env = PlatoonEnv(cfg)
        obs = env.reset()
        gaps = {0: obs[0].vector("ia2c")[1]}
        for k in range(1, 36):
            obs = env.step([0, 0]).observations
            gaps[k] = obs[0].vector("ia2c")[1]
        assert gaps[0] == 0.0
        assert gaps[10] == pytest.approx(0.0, abs=1e-12), "dip starts at 1 s"
        assert gaps[15] == pytest.approx(-0.75, abs=1e-12), "halfway down"
        assert gaps[20] == pytest.approx(-1.5, abs=1e-12), "floor at 2 s"
        assert gaps[25] == pytest.approx(-0.75, abs=1e-12), "halfway back"
        assert gaps[30] == pytest.approx(0.0, abs=1e-12), "recovered at 3 s"

    def test_trace_replay_follows_profile_exactly(self):
        profile = np.array([15.0, 12.0, 12.0, 9.0, 15.0])
        cfg = quiet_scenario(n_vehicles=2, leader_mode="trace-replay", episode_steps=8)
        env = PlatoonEnv(cfg, leader_profile=profile)
        env.reset()
        assert env.agent_vehicles == (1,)
        seen_v, seen_u = [], []
        for _ in range(6):
            env.step([0])
            row = env.vehicle_log_rows()[0]
            seen_v.append(row.velocity_mps)
            seen_u.append(row.accel_mps2)
            assert math.isnan(row.spacing_m)
            assert math.isnan(row.reward)
        assert seen_v == [12.0, 12.0, 9.0, 15.0, 15.0, 15.0], "holds last sample"
        assert seen_u[0] == pytest.approx(-30.0), "trace accel is not actuator-limited"
        assert seen_u[4] == 0.0

    def test_trace_requires_profile(self):
        with pytest.raises(ConfigError):
            PlatoonEnv(quiet_scenario(leader_mode="trace-replay"))

    def test_hard_braking_leader_causes_collision(self):
        profile = np.zeros(100)
        profile[0] = 15.0
        cfg = quiet_scenario(n_vehicles=2, leader_mode="trace-replay", episode_steps=99)
        env = PlatoonEnv(cfg, leader_profile=profile)
        env.reset()
        for k in range(99):
            out = env.step([0])
            if out.collision:
                break
        assert out.collision and out.done
        assert out.rewards[0] < -1000.0
        assert out.info["spacing_m"][0] <= 1.0
        with pytest.raises(RuntimeError):
            env.step([0])

    def test_action_validation(self):
        env = PlatoonEnv(quiet_scenario())
        env.reset()
        with pytest.raises(ValueError):
            env.step([0, 0])
        with pytest.raises(ValueError):
            env.step([0, 0, 4])
        with pytest.raises(ValueError):
            env.step([0, 0, -1])

    def test_fingerprints_appear_in_neighbor_observations(self):
        env = PlatoonEnv(quiet_scenario())
        env.reset()
        fps = np.array([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        obs = env.step([0, 0, 0], fingerprints=fps).observations
        middle = obs[1].vector("fprint")
        assert np.array_equal(middle[15:19], fps[0]), "front neighbor's policy"
        assert np.array_equal(middle[19:23], fps[2]), "rear neighbor's policy"
        first = obs[0].vector("fprint")
        assert np.array_equal(first[15:19], np.zeros(4)), "no agent ahead"
        assert np.array_equal(first[19:23], fps[1])

    def test_fingerprint_shape_validation(self):
        env = PlatoonEnv(quiet_scenario())
        env.reset()
        with pytest.raises(ValueError):
            env.step([0, 0, 0], fingerprints=np.ones((2, 4)))

    def test_observation_components_stay_bounded(self):
        # a violent leader trace plus random gain switching: the velocity
        # gap, headway gap, and accel components must respect their clips
        rng = np.random.default_rng(0)
        profile = rng.uniform(0.0, 30.0, size=60)
        cfg = ScenarioConfig(
            n_vehicles=3,
            leader_mode="trace-replay",
            episode_steps=59,
            perturbation=None,
        )
        env = PlatoonEnv(cfg, leader_profile=profile)
        obs = env.reset()
        for _ in range(59):
            vecs = [o.vector("ia2c") for o in obs]
            for vec in vecs:
                for block in (vec[0:5], vec[5:10], vec[10:15]):
                    assert -2.0 <= block[1] <= 2.0
                    assert -2.0 <= block[2] <= 2.0
                    assert -1.0 <= block[4] <= 1.0
            out = env.step(list(rng.integers(0, N_ACTIONS, size=2)))
            obs = out.observations
            if out.done:
                break

    def test_action_gain_table(self):
        assert ACTION_GAINS == ((0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5))

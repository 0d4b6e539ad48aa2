import math
import os
from dataclasses import replace

import numpy as np
import pytest

from chancexLib import simulator
from chancexLib.agent import AgentConfig, GoalPrior, WindProfile
from chancexLib.chance_constraint import ChanceConstraintSpec, SafeRegion
from chancexLib.exceptions import ConfigError, InferenceError
from chancexLib.simulator import (
    EnvironmentConfig,
    make_rng,
    monte_carlo,
    run_episode,
    sample_wind,
    step,
)


@pytest.fixture
def env():
    return EnvironmentConfig()


@pytest.fixture
def chance_agent():
    """Benchmark agent: T=1, epsilon=0.01, v_w=0.2, lambda=1e-12, matched wind profile."""
    return AgentConfig(
        horizon=1,
        wind_mean_profile=WindProfile(),
        wind_variance=0.2,
        control_precision=1e-12,
        driver=ChanceConstraintSpec(SafeRegion(1.0, math.inf), epsilon=0.01)
    )


@pytest.fixture
def goal_agent(chance_agent):
    return replace(chance_agent, driver=GoalPrior(2.0, 0.18478))


class TestEnvironment:

    def test_deterministic_limit(self):
        env = EnvironmentConfig(wind_variance=1e-12)
        x_next, wind = step(env, 2.0, 1.0, 5, make_rng(0))
        assert wind == pytest.approx(-1.0, abs=1e-5)
        assert x_next == pytest.approx(2.0, abs=1e-5)

    def test_seed_reproduces_the_stream(self, env):
        first = [step(env, 2.0, 0.0, t, make_rng(42))[1] for t in range(3)]
        second = [step(env, 2.0, 0.0, t, make_rng(42))[1] for t in range(3)]
        assert first == second

    def test_wind_mean_matches_the_profile(self, env):
        samples = sample_wind(env, 6, make_rng(1), size=100000)
        tolerance = 3.0 * math.sqrt(env.wind_variance / samples.size)
        assert abs(samples.mean() - env.wind_mean_profile(6)) < tolerance
        assert samples.var() == pytest.approx(env.wind_variance, rel=0.02)

    def test_samples_are_finite(self, env):
        assert np.isfinite(sample_wind(env, 0, make_rng(3), size=10000)).all()

    @pytest.mark.parametrize("changes", [{"horizon_length": 0}, {"wind_variance": -1.0}, {"rng_seed": -1}])
    def test_config_validation(self, env, changes):
        with pytest.raises(ConfigError):
            replace(env, **changes)


class TestEpisode:

    def test_transition_bookkeeping(self, env, chance_agent):
        record = run_episode(env, chance_agent)

        assert not record.failed
        assert len(record.elevations) == env.horizon_length + 1
        assert len(record.actions) == len(record.winds) == len(record.violations) == env.horizon_length
        for t in range(env.horizon_length):
            assert record.elevations[t + 1] == record.elevations[t] + record.actions[t] + record.winds[t]

    def test_violation_flags_follow_the_safe_region(self, env, chance_agent):
        record = run_episode(env, chance_agent)
        assert record.violations == [x < 1.0 for x in record.elevations[1:]]

    def test_calm_high_start_needs_no_action(self, chance_agent):
        env = EnvironmentConfig(wind_mean_profile=WindProfile.calm(), horizon_length=5, initial_elevation=10.0)
        record = run_episode(env, replace(chance_agent, wind_mean_profile=WindProfile.calm()))

        assert all(a == pytest.approx(0.0, abs=1e-9) for a in record.actions)
        assert not any(record.violations)

    def test_downdraft_triggers_corrective_actions(self, env, chance_agent):
        record = run_episode(env, chance_agent)
        assert max(record.actions[5:10]) > 0.5

    def test_goal_driven_agent_descends_from_above(self, goal_agent):
        env = EnvironmentConfig(initial_elevation=3.0)
        record = run_episode(env, goal_agent)
        assert record.actions[0] == pytest.approx(-1.0, abs=1e-3)

    def test_same_seed_same_episode(self, env, chance_agent):
        assert run_episode(env, chance_agent).to_dict() == run_episode(env, chance_agent).to_dict()

    def test_model_mismatch_is_rejected(self, env, chance_agent):
        with pytest.raises(ConfigError):
            run_episode(env, replace(chance_agent, wind_variance=0.4))
        with pytest.raises(ConfigError):
            run_episode(env, replace(chance_agent, wind_mean_profile=WindProfile.calm()))

    def test_inference_failure_keeps_a_partial_record(self, env, chance_agent, monkeypatch):
        original = simulator.infer_policy

        def failing(config, x, t):
            if t == 3:
                raise InferenceError("forced")
            return original(config, x, t)

        monkeypatch.setattr(simulator, "infer_policy", failing)
        record = run_episode(env, chance_agent)

        assert record.failed
        assert "t=3" in record.error
        assert len(record.actions) == 3
        assert len(record.elevations) == 4


class TestMonteCarlo:

    def test_single_run_equals_the_episode(self, env, chance_agent):
        summary = monte_carlo(env, chance_agent, runs=1)
        record = run_episode(env, chance_agent)
        assert summary.violation_ratio == tuple(float(v) for v in record.violations)

    def test_is_deterministic(self, env, chance_agent):
        assert monte_carlo(env, chance_agent, runs=8) == monte_carlo(env, chance_agent, runs=8)

    def test_worker_count_does_not_change_the_result(self, env, chance_agent):
        assert monte_carlo(env, chance_agent, runs=6, workers=2) == monte_carlo(env, chance_agent, runs=6)

    def test_workers_log_to_their_own_directories(self, env, chance_agent, tmp_path, monkeypatch):
        monkeypatch.setenv("CHANCEX_LOG_DIR", str(tmp_path))
        monte_carlo(env, chance_agent, runs=4, workers=2)

        worker_dirs = [p for p in (tmp_path / "workers").iterdir() if p.is_dir()]
        assert worker_dirs
        for directory in worker_dirs:
            assert directory.name.isdigit()
            assert (directory / "info.log").exists()
            assert (directory / "errors.log").exists()

    def test_bands_are_ordered(self, env, chance_agent):
        summary = monte_carlo(env, chance_agent, runs=30)
        low, mid, high = (np.array(summary.elevation_bands[q]) for q in (0.05, 0.5, 0.95))
        assert (low <= mid).all() and (mid <= high).all()
        assert len(low) == env.horizon_length + 1
        assert len(summary.action_bands[0.5]) == env.horizon_length

    def test_failed_runs_are_excluded(self, env, chance_agent, monkeypatch):
        original = simulator.run_episode

        def flaky(env, agent):
            record = original(env, agent)
            if env.rng_seed % 2:
                record.error = "forced"
            return record

        monkeypatch.setattr(simulator, "run_episode", flaky)
        summary = monte_carlo(env, chance_agent, runs=4)

        assert summary.failed_runs == 2
        assert summary.failed_seeds == (1, 3)
        assert summary.completed_runs == 2

    def test_all_runs_failing_raises(self, env, chance_agent, monkeypatch):
        def broken(config, x, t):
            raise InferenceError("forced")

        monkeypatch.setattr(simulator, "infer_policy", broken)
        with pytest.raises(InferenceError):
            monte_carlo(env, chance_agent, runs=3)

    @pytest.mark.parametrize("runs, workers", [(0, 1), (3, 0)])
    def test_argument_validation(self, env, chance_agent, runs, workers):
        with pytest.raises(ConfigError):
            monte_carlo(env, chance_agent, runs=runs, workers=workers)

    def test_loose_budget_stays_near_its_target(self, env, chance_agent):
        loose = replace(chance_agent, driver=ChanceConstraintSpec(SafeRegion(1.0, math.inf), epsilon=0.5))
        summary = monte_carlo(env, loose, runs=400)
        assert summary.max_violation <= 0.6

    @pytest.mark.slow
    def test_benchmark_violations(self, env, chance_agent, goal_agent):
        workers = os.cpu_count() or 1
        chance = monte_carlo(env, chance_agent, runs=10000, workers=workers)
        goal = monte_carlo(env, goal_agent, runs=10000, workers=workers)

        assert chance.failed_runs == 0
        assert chance.max_violation <= 0.02
        assert goal.max_violation > chance.max_violation

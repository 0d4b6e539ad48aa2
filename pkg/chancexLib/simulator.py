"""
Closed-loop drone environment and the Monte-Carlo harness.

The environment follows x_{t+1} = x_t + a_t + w_t with w_t ~ N(m_w(t), v_w).
Wind samples come from a Philox counter-based stream mapped through the
inverse normal CDF, so a seed pins a trajectory on every platform that
shares numpy's Philox implementation.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from chancexLib.agent import AgentConfig, WindProfile, infer_policy
from chancexLib.chance_constraint import SafeRegion
from chancexLib.exceptions import ChancexError, ConfigError, InferenceError
from chancexLib.initialize_loggers import resolve_log_dir, setup_loggers

error_logger, info_logger = setup_loggers()

QUANTILES = (0.05, 0.5, 0.95)
_UNIFORM_BITS = 53


def default_safe_region() -> SafeRegion:
    return SafeRegion(1.0, math.inf)


@dataclass(frozen=True)
class EnvironmentConfig:
    wind_mean_profile: WindProfile = field(default_factory=WindProfile)
    wind_variance: float = 0.2
    horizon_length: int = 20
    initial_elevation: float = 2.0
    rng_seed: int = 0
    safe_region: SafeRegion = field(default_factory=default_safe_region)

    def __post_init__(self) -> None:
        if int(self.horizon_length) != self.horizon_length or self.horizon_length < 1:
            raise ConfigError(f"Episode length must be a positive integer, got {self.horizon_length}")

        if not (self.wind_variance > 0.0 and math.isfinite(self.wind_variance)):
            raise ConfigError(f"Wind variance must be positive, got {self.wind_variance}")

        if not math.isfinite(self.initial_elevation):
            raise ConfigError(f"Initial elevation must be finite, got {self.initial_elevation}")

        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise ConfigError(f"Seed must be an unsigned integer, got {self.rng_seed}")


def make_rng(seed: int) -> np.random.Generator:
    """
    :param seed: integer key of the Philox counter stream
    :return: generator whose draws depend on the seed alone
    """
    return np.random.Generator(np.random.Philox(int(seed)))


def sample_wind(env: EnvironmentConfig, t: int, rng: np.random.Generator, size: int | None = None):
    """Draws w_t ~ N(m_w(t), v_w) by inverse-CDF on uniforms strictly inside (0, 1)."""
    counts = rng.integers(0, 2 ** _UNIFORM_BITS, size=size, dtype=np.uint64)
    uniforms = (counts.astype(np.float64) + 0.5) / 2.0 ** _UNIFORM_BITS
    return env.wind_mean_profile(t) + math.sqrt(env.wind_variance) * ndtri(uniforms)


def step(env: EnvironmentConfig, elevation: float, action: float, t: int, rng: np.random.Generator) -> tuple[float, float]:
    """
    Advances the drone one step under x_{t+1} = x_t + a_t + w_t.

    :param env: environment supplying the wind profile and variance
    :param elevation: current elevation x_t
    :param action: applied action a_t
    :param t: time index used by the wind profile
    :param rng: generator the wind is drawn from
    :return: (x_{t+1}, w_t)
    """
    wind = float(sample_wind(env, t, rng))
    return elevation + action + wind, wind


@dataclass
class SimulationRecord:
    elevations: list[float] = field(default_factory=list)
    actions: list[float] = field(default_factory=list)
    winds: list[float] = field(default_factory=list)
    violations: list[bool] = field(default_factory=list)
    em_iterations: list[int] = field(default_factory=list)
    seed: int = 0
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "elevations": list(self.elevations),
            "actions": list(self.actions),
            "winds": list(self.winds),
            "violations": list(self.violations),
            "em_iterations": list(self.em_iterations),
            "error": self.error,
        }


def _check_shared_model(env: EnvironmentConfig, agent: AgentConfig) -> None:
    if agent.wind_variance != env.wind_variance:
        raise ConfigError(
            f"Agent wind variance {agent.wind_variance} differs from the environment's {env.wind_variance}"
        )

    if agent.wind_mean_profile != env.wind_mean_profile:
        raise ConfigError("Agent and environment must share the wind mean profile")


def run_episode(env: EnvironmentConfig, agent: AgentConfig) -> SimulationRecord:
    """
    Runs the observe / infer / act / execute loop for env.horizon_length steps.

    violations[i] flags x_{i+1} outside env.safe_region. An inference failure
    ends the episode early; the record keeps what was simulated and the
    error text.
    """
    _check_shared_model(env, agent)

    rng = make_rng(env.rng_seed)
    elevation = float(env.initial_elevation)
    record = SimulationRecord(elevations=[elevation], seed=env.rng_seed)

    for t in range(env.horizon_length):
        try:
            policy = infer_policy(agent, elevation, t)

        except ChancexError as error:
            error_logger.error(f"Episode with seed {env.rng_seed} aborted at t={t}: {str(error)}", exc_info=True)
            record.error = f"t={t}: {error}"
            break

        action = policy.actions[0]
        elevation, wind = step(env, elevation, action, t, rng)

        record.actions.append(action)
        record.winds.append(wind)
        record.elevations.append(elevation)
        record.violations.append(not bool(env.safe_region.contains(elevation)))
        record.em_iterations.append(policy.em_iterations)

    return record


@dataclass(frozen=True)
class MonteCarloSummary:
    runs: int
    failed_runs: int
    violation_ratio: tuple[float, ...]
    max_violation: float
    elevation_bands: dict[float, tuple[float, ...]]
    action_bands: dict[float, tuple[float, ...]]
    failed_seeds: tuple[int, ...] = ()

    @property
    def completed_runs(self) -> int:
        return self.runs - self.failed_runs

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "failed_runs": self.failed_runs,
            "failed_seeds": list(self.failed_seeds),
            "violation_ratio": list(self.violation_ratio),
            "max_violation": self.max_violation,
            "elevation_bands": {f"q{int(round(q * 100)):02d}": list(v) for q, v in self.elevation_bands.items()},
            "action_bands": {f"q{int(round(q * 100)):02d}": list(v) for q, v in self.action_bands.items()},
        }


def _init_worker(log_dir: str) -> None:
    # One set of rotating files per worker process.
    setup_loggers(os.path.join(log_dir, "workers", str(os.getpid())))


def _seeded_episode(args: tuple[EnvironmentConfig, AgentConfig, int]) -> SimulationRecord:
    env, agent, seed = args
    return run_episode(replace(env, rng_seed=seed), agent)


def _bands(rows: np.ndarray) -> dict[float, tuple[float, ...]]:
    return {q: tuple(float(v) for v in np.quantile(rows, q, axis=0)) for q in QUANTILES}


def monte_carlo(env: EnvironmentConfig, agent: AgentConfig, runs: int, workers: int = 1) -> MonteCarloSummary:
    """
    Runs `runs` independent episodes with seeds env.rng_seed + i.

    :param env: environment shared by every episode, rng_seed is the base seed
    :param agent: agent configuration, must share the wind model with env
    :param runs: number of episodes
    :param workers: process count; above 1 each worker logs under <log dir>/workers/<pid>
    :return: MonteCarloSummary over the completed episodes
    :raises ConfigError: on a non-positive runs or workers count
    :raises InferenceError: when every episode failed

    Failed episodes are counted and left out of the ratios and bands.
    Results are reduced in seed order, so the summary does not depend on
    the number of workers.
    """
    if int(runs) != runs or runs < 1:
        raise ConfigError(f"runs must be a positive integer, got {runs}")

    if int(workers) != workers or workers < 1:
        raise ConfigError(f"workers must be a positive integer, got {workers}")

    _check_shared_model(env, agent)
    jobs = [(env, agent, env.rng_seed + i) for i in range(runs)]

    if workers == 1:
        records = [_seeded_episode(job) for job in jobs]

    else:
        chunksize = max(1, runs // (workers * 4))
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(resolve_log_dir(),)
        ) as executor:
            records = list(executor.map(_seeded_episode, jobs, chunksize=chunksize))

    completed = [r for r in records if not r.failed]
    failed_seeds = tuple(r.seed for r in records if r.failed)

    if not completed:
        raise InferenceError(f"All {runs} episodes failed")

    violations = np.array([r.violations for r in completed], dtype=np.float64)
    ratios = violations.mean(axis=0)

    summary = MonteCarloSummary(
        runs=runs,
        failed_runs=len(failed_seeds),
        violation_ratio=tuple(float(r) for r in ratios),
        max_violation=float(ratios.max()),
        elevation_bands=_bands(np.array([r.elevations for r in completed], dtype=np.float64)),
        action_bands=_bands(np.array([r.actions for r in completed], dtype=np.float64)),
        failed_seeds=failed_seeds
    )

    info_logger.info(
        f"Monte-Carlo finished: {runs} runs, {len(failed_seeds)} failed, "
        f"max violation ratio {summary.max_violation:.9g}"
    )

    return summary

"""
Run configuration: defaults, config files and command-line overrides.

Precedence is defaults < config file < flags. A config file is either an
INI file with a [CHANCEX] section or a JSON object (a flat object, or a
result file whose "config" block is reused).
"""

from __future__ import annotations

import configparser
import json
import math
import os
from collections.abc import Mapping

import numpy as np

from chancexLib.agent import AgentConfig, GoalPrior, WindProfile
from chancexLib.chance_constraint import ChanceConstraintSpec, SafeRegion
from chancexLib.exceptions import ChancexError, ConfigError
from chancexLib.simulator import EnvironmentConfig

SECTION = "CHANCEX"
DRIVERS = ("chance", "goal")

DEFAULTS = {
    "horizon": 1,
    "epsilon": 0.01,
    "delta": 1e-4,
    "max_iterations": 100,
    "wind_var": 0.2,
    "lambda": 1e-12,
    "driver": "chance",
    "m_x": 2.0,
    "var_x": 0.18478,
    "safe_lower": 1.0,
    "safe_upper": math.inf,
    "em_max_iters": 50,
    "em_tol": 1e-6,
    "seed": 0,
    "runs": 10000,
    "workers": 1,
    "steps": 20,
    "initial_elevation": 2.0,
    "draft_start": 5,
    "draft_end": 10,
    "draft_mean": -1.0,
    "x_min": 0.0,
    "x_max": 5.0,
    "x_step": 0.01,
}

INTEGER_KEYS = frozenset({
    "horizon", "max_iterations", "em_max_iters", "seed", "runs", "workers", "steps", "draft_start", "draft_end"
})
STRING_KEYS = frozenset({"driver"})


def coerce_value(key: str, raw) -> int | float | str:
    """Converts a raw config value (string or JSON scalar) to the key's type."""
    if key not in DEFAULTS:
        raise ConfigError(f"Unknown config key '{key}'")

    if key in STRING_KEYS:
        value = str(raw).strip().lower()
        if value not in DRIVERS:
            raise ConfigError(f"Key '{key}' must be one of {', '.join(DRIVERS)}, got '{raw}'")
        return value

    if isinstance(raw, bool):
        raise ConfigError(f"Key '{key}' must be numeric, got {raw}")

    try:
        if key in INTEGER_KEYS:
            number = float(raw)
            if not number.is_integer():
                raise ValueError
            return int(number)

        number = float(raw)

    except (TypeError, ValueError):
        raise ConfigError(f"Key '{key}' has a malformed value '{raw}'") from None

    if math.isnan(number):
        raise ConfigError(f"Key '{key}' must not be NaN")

    return number


def parse_values(key: str, text: str) -> list:
    """Parses a comma-separated flag value into a list of typed values."""
    items = [item.strip() for item in str(text).split(",")]
    if not items or any(item == "" for item in items):
        raise ConfigError(f"Key '{key}' has an empty entry in '{text}'")

    return [coerce_value(key, item) for item in items]


def read_config_file(path: str) -> dict:
    """Reads an INI or JSON config file into a dict of typed values."""
    if not os.path.isfile(path):
        raise ConfigError(f"Config file '{path}' not found")

    if path.lower().endswith(".json"):
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)

            except json.JSONDecodeError as error:
                raise ConfigError(f"Config file '{path}' is not valid JSON: {error}") from error

        if isinstance(data, dict) and isinstance(data.get("config"), dict):
            data = data["config"]

        if not isinstance(data, dict):
            raise ConfigError(f"Config file '{path}' must hold a JSON object")

        return {key: coerce_value(key, value) for key, value in data.items() if value is not None}

    parser = configparser.ConfigParser()

    try:
        parser.read(path, encoding="utf-8")

    except configparser.Error as error:
        raise ConfigError(f"Failed to parse '{path}': {error}") from error

    if not parser.has_section(SECTION):
        raise ConfigError(f"Config file '{path}' has no [{SECTION}] section")

    # Empty values fall back to the defaults
    return {key: coerce_value(key, raw) for key, raw in parser.items(SECTION) if raw.strip()}


def validate_config(config: Mapping) -> None:
    for key in INTEGER_KEYS - {"seed", "draft_start", "draft_end"}:
        if config[key] < 1:
            raise ConfigError(f"Key '{key}' must be at least 1, got {config[key]}")

    if config["seed"] < 0:
        raise ConfigError(f"Key 'seed' must be non-negative, got {config['seed']}")

    if not 0.0 < config["epsilon"] < 1.0:
        raise ConfigError(f"Key 'epsilon' must lie in (0, 1), got {config['epsilon']}")

    for key in ("wind_var", "lambda", "var_x", "em_tol", "x_step"):
        if not (config[key] > 0.0 and math.isfinite(config[key])):
            raise ConfigError(f"Key '{key}' must be positive and finite, got {config[key]}")

    if not config["safe_lower"] < config["safe_upper"]:
        raise ConfigError("Key 'safe_lower' must be below 'safe_upper'")

    if not config["x_min"] <= config["x_max"]:
        raise ConfigError("Key 'x_min' must not exceed 'x_max'")


def merge_config(file_values: Mapping | None = None, flag_values: Mapping | None = None) -> dict:
    """Defaults, then file values, then flags (None flags are skipped)."""
    config = dict(DEFAULTS)
    config.update(file_values or {})
    config.update({key: value for key, value in (flag_values or {}).items() if value is not None})

    unknown = set(config) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(sorted(unknown))}")

    validate_config(config)
    return config


def wind_profile(config: Mapping) -> WindProfile:
    return WindProfile(
        base_mean=0.0,
        draft_mean=config["draft_mean"],
        draft_start=config["draft_start"],
        draft_end=config["draft_end"]
    )


def build_agent_config(config: Mapping) -> AgentConfig:
    try:
        if config["driver"] == "chance":
            driver = ChanceConstraintSpec(
                SafeRegion(config["safe_lower"], config["safe_upper"]),
                epsilon=config["epsilon"],
                delta=config["delta"],
                max_iterations=config["max_iterations"]
            )

        else:
            driver = GoalPrior(config["m_x"], config["var_x"])

        return AgentConfig(
            horizon=config["horizon"],
            wind_mean_profile=wind_profile(config),
            wind_variance=config["wind_var"],
            control_precision=config["lambda"],
            driver=driver,
            em_max_iters=config["em_max_iters"],
            em_tol=config["em_tol"]
        )

    except ChancexError as error:
        raise ConfigError(f"Invalid agent settings: {error}") from error


def build_environment_config(config: Mapping) -> EnvironmentConfig:
    try:
        return EnvironmentConfig(
            wind_mean_profile=wind_profile(config),
            wind_variance=config["wind_var"],
            horizon_length=config["steps"],
            initial_elevation=config["initial_elevation"],
            rng_seed=config["seed"],
            safe_region=SafeRegion(config["safe_lower"], config["safe_upper"])
        )

    except ChancexError as error:
        raise ConfigError(f"Invalid environment settings: {error}") from error


def elevation_grid(config: Mapping) -> np.ndarray:
    """Grid x_min, x_min + x_step, ..., x_max (inclusive up to rounding)."""
    count = int(math.floor((config["x_max"] - config["x_min"]) / config["x_step"] + 1e-9)) + 1
    if count < 1:
        raise ConfigError("Elevation grid is empty")

    return config["x_min"] + config["x_step"] * np.arange(count, dtype=np.float64)

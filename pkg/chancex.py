"""
Chance-Constrained Active Inference Benchmark

Runs the elevation-keeping drone benchmark on a factor-graph message-passing
engine with chance-constraint nodes.

 - control-law: first action as a function of elevation, swept over one parameter
 - simulate: one closed-loop episode with a seeded wind stream
 - mc: seeded Monte-Carlo batch with per-time violation ratios

Author: J.P Rojas | License: GPLv3 | Version: 1.0.0 | Status: Stable
"""

__author__ = "J.P Rojas"
__version__ = "1.0.0"
__status__ = "Stable"
__license__ = "GPLv3"
__description__ = (
    "Chance-constrained message passing benchmark. Computes control laws, "
    "closed-loop episodes and Monte-Carlo violation statistics for a drone "
    "that has to stay above a minimal elevation"
)

import argparse
import math
import sys

from chancexLib.agent import control_law, intervention_threshold
from chancexLib.exceptions import ChancexError, ConfigError
from chancexLib.initialize_loggers import setup_loggers
from chancexLib.load_config import (
    DEFAULTS,
    build_agent_config,
    build_environment_config,
    elevation_grid,
    merge_config,
    parse_values,
    read_config_file,
)
from chancexLib.simulator import monte_carlo, run_episode
from chancexLib.write_results import format_float, run_metadata, sidecar_path, write_csv, write_json

error_logger, info_logger = setup_loggers()

DEFAULT_OUTPUTS = {
    "control-law": "results/control_law.csv",
    "simulate": "results/simulation.json",
    "mc": "results/mc_violations.csv",
}

# --vary names and the config keys they stand for
VARY_ALIASES = {
    "T": "horizon",
    "horizon": "horizon",
    "epsilon": "epsilon",
    "v_w": "wind_var",
    "wind_var": "wind_var",
    "lambda": "lambda",
    "delta": "delta",
    "m_x": "m_x",
    "var_x": "var_x",
}

# Episode settings that are repository choices rather than benchmark values
REPO_DEFAULT_KEYS = ("steps", "initial_elevation", "draft_start", "draft_end", "draft_mean")


class ChancexArgumentParser(argparse.ArgumentParser):
    """Argument errors are configuration errors: usage, then exit code 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"[ERROR]: {message}", file=sys.stderr)
        sys.exit(1)


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    # Values stay strings here; load_config coerces them so comma lists work
    model_flags = [
        (("-T", "--horizon"), "horizon", "Lookahead horizon T"),
        (("--epsilon",), "epsilon", "Allowed violation probability"),
        (("--delta",), "delta", "Tolerance on the recovered safe mass"),
        (("--max-iterations",), "max_iterations", "Correction iteration cap"),
        (("--wind-var",), "wind_var", "Wind variance v_w"),
        (("--lambda",), "lambda", "Control prior precision"),
        (("--m-x",), "m_x", "Goal prior mean (goal driver)"),
        (("--var-x",), "var_x", "Goal prior variance (goal driver)"),
        (("--safe-lower",), "safe_lower", "Lower bound of the safe region"),
        (("--safe-upper",), "safe_upper", "Upper bound of the safe region (inf allowed)"),
        (("--em-max-iters",), "em_max_iters", "Maximum forward-backward sweeps per policy"),
        (("--em-tol",), "em_tol", "Convergence tolerance on the actions"),
        (("--seed",), "seed", "Base random seed"),
    ]

    for flags, dest, text in model_flags:
        parser.add_argument(*flags, dest=dest, type=str, default=None, metavar="VALUE", help=text)

    parser.add_argument(
        "--driver",
        dest="driver",
        type=str,
        default=None,
        choices=["chance", "goal"],
        help="Chance-constraint node or goal prior on future states"
    )
    parser.add_argument(
        "--config",
        dest="config",
        type=str,
        default=None,
        metavar="FILE",
        help="INI ([CHANCEX] section) or JSON config file"
    )
    parser.add_argument("--out", dest="out", type=str, default=None, metavar="FILE", help="Output file")


def _add_episode_flags(parser: argparse.ArgumentParser) -> None:
    episode_flags = [
        (("--steps",), "steps", "Episode length L"),
        (("--x0",), "initial_elevation", "Initial elevation"),
        (("--draft-start",), "draft_start", "First time step of the downdraft"),
        (("--draft-end",), "draft_end", "Time step the downdraft stops"),
        (("--draft-mean",), "draft_mean", "Expected wind velocity during the downdraft"),
    ]

    for flags, dest, text in episode_flags:
        parser.add_argument(*flags, dest=dest, type=str, default=None, metavar="VALUE", help=text)


def build_parser() -> argparse.ArgumentParser:
    parser = ChancexArgumentParser(description=__description__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    law = subparsers.add_parser("control-law", help="Sweep the first action over an elevation grid")
    _add_model_flags(law)
    law.add_argument("--vary", dest="vary", type=str, default=None, metavar="NAME",
                     help=f"Parameter to vary: {', '.join(VARY_ALIASES)}")
    law.add_argument("--values", dest="values", type=str, default=None, metavar="LIST",
                     help="Comma-separated values for --vary")
    for flag, dest in (("--x-min", "x_min"), ("--x-max", "x_max"), ("--x-step", "x_step")):
        law.add_argument(flag, dest=dest, type=str, default=None, metavar="VALUE", help="Elevation grid")

    simulate = subparsers.add_parser("simulate", help="Run one closed-loop episode")
    _add_model_flags(simulate)
    _add_episode_flags(simulate)

    mc = subparsers.add_parser("mc", help="Run a Monte-Carlo batch of episodes")
    _add_model_flags(mc)
    _add_episode_flags(mc)
    mc.add_argument("--runs", dest="runs", type=str, default=None, metavar="N", help="Number of episodes")
    mc.add_argument("--workers", dest="workers", type=str, default=None, metavar="N", help="Worker processes")

    return parser


def collect_flags(args: argparse.Namespace) -> dict[str, list]:
    """Config keys given on the command line, each parsed as a value list."""
    values = {}
    for key, raw in vars(args).items():
        if key in DEFAULTS and raw is not None:
            values[key] = [raw] if key == "driver" else parse_values(key, raw)
    return values


def single_valued(flags: dict[str, list]) -> dict:
    multiple = [key for key, values in flags.items() if len(values) > 1]
    if multiple:
        raise ConfigError(f"Only control-law accepts value lists; got several values for {', '.join(multiple)}")
    return {key: values[0] for key, values in flags.items()}


def load_file_values(args: argparse.Namespace) -> dict:
    return read_config_file(args.config) if args.config else {}


def resolve_variants(args: argparse.Namespace, flags: dict[str, list]) -> tuple[str | None, list]:
    """Picks the swept parameter from --vary/--values or from a single comma-list flag."""
    listed = [key for key, values in flags.items() if len(values) > 1]

    if args.vary is None:
        if args.values is not None:
            raise ConfigError("--values needs --vary")
        if len(listed) > 1:
            raise ConfigError(f"Only one parameter can be varied, got {', '.join(listed)}")
        if listed:
            return listed[0], flags.pop(listed[0])
        return None, [None]

    if args.vary not in VARY_ALIASES:
        raise ConfigError(f"Cannot vary '{args.vary}'; choose one of {', '.join(VARY_ALIASES)}")

    if args.values is None:
        raise ConfigError("--vary needs --values")

    if listed:
        raise ConfigError(f"--vary cannot be combined with value lists on {', '.join(listed)}")

    key = VARY_ALIASES[args.vary]
    flags.pop(key, None)
    return key, parse_values(key, args.values)


def cmd_control_law(args: argparse.Namespace) -> int:
    file_values = load_file_values(args)
    flags = collect_flags(args)
    varied, values = resolve_variants(args, flags)
    base_flags = single_valued(flags)

    base_config = merge_config(file_values, base_flags)
    grid = elevation_grid(base_config)

    rows = []
    variants = []
    failed_points = 0

    for value in values:
        overrides = dict(base_flags)
        label = "reference"
        if varied is not None:
            overrides[varied] = value
            label = f"{varied}={format_float(value) if isinstance(value, float) else value}"

        config = merge_config(file_values, overrides)
        law = control_law(build_agent_config(config), grid)
        failures = sum(1 for _, a in law if math.isnan(a))
        failed_points += failures

        rows += [(x, a, label) for x, a in law]
        variants.append({
            "label": label,
            "value": value,
            "intervention_threshold": intervention_threshold(law),
            "failed_points": failures,
        })
        info_logger.info(f"Control law '{label}' computed on {len(grid)} grid points ({failures} failed)")

    out = args.out or DEFAULT_OUTPUTS["control-law"]
    write_csv(out, ("x_t", "a_t", "variant"), rows)

    payload = run_metadata(base_config, __version__, "control-law")
    payload.update({"vary": varied, "variants": variants})
    write_json(sidecar_path(out), payload)

    print(f"Control law written to {out}")
    return 2 if failed_points else 0


def _repo_defaults(config: dict) -> list[str]:
    return [key for key in REPO_DEFAULT_KEYS if config[key] == DEFAULTS[key]]


def cmd_simulate(args: argparse.Namespace) -> int:
    config = merge_config(load_file_values(args), single_valued(collect_flags(args)))
    env = build_environment_config(config)
    agent = build_agent_config(config)

    record = run_episode(env, agent)

    payload = run_metadata(config, __version__, "simulate")
    payload.update({"repo_defaults": _repo_defaults(config), "record": record.to_dict()})

    out = args.out or DEFAULT_OUTPUTS["simulate"]
    write_json(out, payload)

    print(f"Episode written to {out}")
    return 2 if record.failed else 0


def cmd_monte_carlo(args: argparse.Namespace) -> int:
    config = merge_config(load_file_values(args), single_valued(collect_flags(args)))
    env = build_environment_config(config)
    agent = build_agent_config(config)

    summary = monte_carlo(env, agent, config["runs"], workers=config["workers"])

    bands = summary.elevation_bands
    rows = [
        (t + 1, ratio, bands[0.05][t + 1], bands[0.5][t + 1], bands[0.95][t + 1])
        for t, ratio in enumerate(summary.violation_ratio)
    ]

    out = args.out or DEFAULT_OUTPUTS["mc"]
    write_csv(out, ("t", "violation_ratio", "elevation_q05", "elevation_q50", "elevation_q95"), rows)

    payload = run_metadata(config, __version__, "mc")
    payload.update({
        "repo_defaults": _repo_defaults(config),
        "summary": summary.to_dict(),
        "epsilon": config["epsilon"],
        "exceeds_epsilon": summary.max_violation > config["epsilon"],
    })
    write_json(sidecar_path(out), payload)

    print(f"Violation ratios written to {out}")
    return 2 if summary.failed_runs else 0


COMMANDS = {
    "control-law": cmd_control_law,
    "simulate": cmd_simulate,
    "mc": cmd_monte_carlo,
}


def main(argv: list[str] | None = None) -> int:
    """
    Entry point. Exit codes: 0 success, 1 config error,
    2 inference error, 3 IO error.
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        return COMMANDS[args.command](args)

    except ConfigError as error:
        error_logger.error(f"Configuration error: {str(error)}")
        parser.print_usage(sys.stderr)
        print(f"[ERROR]: {error}", file=sys.stderr)
        return 1

    except ChancexError as error:
        error_logger.error(f"Inference error: {str(error)}", exc_info=True)
        print(f"[ERROR]: {error}", file=sys.stderr)
        return 2

    except OSError as error:
        error_logger.error(f"IO error: {str(error)}", exc_info=True)
        print(f"[ERROR]: {error}", file=sys.stderr)
        return 3

    except KeyboardInterrupt:
        error_logger.error("Execution interrupted by user (Ctrl+C)", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""
Active-inference agent for the elevation-keeping drone.

The agent models its next T states as a chain of slices

    s_k     = x_k + n_k              (add_u_k)
    n_k     ~ N(u_k, v_w)            (noise_k, Gaussian node)
    x_{k+1} = s_k + m_{w,t+k}        (add_w_k, wind mean clamped on w_k)
    u_k     ~ N(0, 1/lambda)         (prior_u_k)

with an auxiliary node on every future state: a chance-constraint node for
the chance-driven agent, a fixed goal prior for the goal-driven baseline.
Actions are found by iterating a forward-backward sweep: controls are
clamped to the current actions, the variational message toward each
control is combined with its prior, and the mode becomes the next action.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace

from chancexLib.chance_constraint import ChanceConstraintSpec, CorrectionDiagnostics, SafeRegion
from chancexLib.exceptions import ChancexError, ConfigError, InferenceError
from chancexLib.gaussian_core import Gaussian1D, mode_of_product
from chancexLib.graph import (
    AdditionNode,
    ChanceConstraintNode,
    FactorGraph,
    FactorSpec,
    GaussianNode,
    GoalPriorNode,
    PointMassInput,
    PriorNode,
    Rule,
    Schedule,
    ScheduleEntry,
    StateLink,
    TerminalNode,
    bethe_free_energy,
    build_graph,
    initialize_board,
    run_schedule,
)
from chancexLib.initialize_loggers import setup_loggers

error_logger, info_logger = setup_loggers()

GOAL_MEAN = 2.0
GOAL_VARIANCE = 0.18478


@dataclass(frozen=True)
class WindProfile:
    """Expected wind velocity m_w(t): draft_mean on draft_start <= t < draft_end, base_mean elsewhere."""

    base_mean: float = 0.0
    draft_mean: float = -1.0
    draft_start: int = 5
    draft_end: int = 10

    def __call__(self, t: int) -> float:
        if self.draft_start <= t < self.draft_end:
            return self.draft_mean
        return self.base_mean

    @classmethod
    def calm(cls) -> "WindProfile":
        return cls(base_mean=0.0, draft_mean=0.0, draft_start=0, draft_end=0)


@dataclass(frozen=True)
class GoalPrior:
    mean: float = GOAL_MEAN
    variance: float = GOAL_VARIANCE

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and self.variance > 0.0 and math.isfinite(self.variance)):
            raise ConfigError(f"Goal prior needs a finite mean and positive variance, got ({self.mean}, {self.variance})")

    @property
    def gaussian(self) -> Gaussian1D:
        return Gaussian1D(self.mean, self.variance)


def default_chance_spec() -> ChanceConstraintSpec:
    return ChanceConstraintSpec(SafeRegion(1.0, math.inf), epsilon=0.01)


@dataclass(frozen=True)
class AgentConfig:
    horizon: int = 1
    wind_mean_profile: WindProfile = field(default_factory=WindProfile.calm)
    wind_variance: float = 0.2
    control_precision: float = 1e-12
    driver: ChanceConstraintSpec | GoalPrior = field(default_factory=default_chance_spec)
    em_max_iters: int = 50
    em_tol: float = 1e-6

    def __post_init__(self) -> None:
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError(f"Horizon must be a positive integer, got {self.horizon}")

        if not (self.wind_variance > 0.0 and math.isfinite(self.wind_variance)):
            raise ConfigError(f"Wind variance must be positive, got {self.wind_variance}")

        if not (self.control_precision > 0.0 and math.isfinite(self.control_precision)):
            raise ConfigError(f"Control precision must be positive, got {self.control_precision}")

        if not isinstance(self.driver, (ChanceConstraintSpec, GoalPrior)):
            raise ConfigError(f"Unknown driver {type(self.driver).__name__}")

        if int(self.em_max_iters) != self.em_max_iters or self.em_max_iters < 2:
            raise ConfigError(f"em_max_iters must be an integer >= 2, got {self.em_max_iters}")

        if not self.em_tol > 0.0:
            raise ConfigError(f"em_tol must be positive, got {self.em_tol}")

    @property
    def is_chance_driven(self) -> bool:
        return isinstance(self.driver, ChanceConstraintSpec)


@dataclass(frozen=True)
class Policy:
    actions: tuple[float, ...]
    diagnostics: tuple[CorrectionDiagnostics | None, ...]
    em_iterations: int
    converged: bool
    warm_start: bool = True
    free_energy: tuple[float, ...] = ()


def _state(k: int) -> str:
    return f"x{k}"


def build_agent_graph(config: AgentConfig, current_elevation: float, current_time: int) -> tuple[FactorGraph, Schedule]:
    """
    Builds the T-slice lookahead model and its forward-backward schedule.

    Per slice the forward pass computes messages 1-7 and the backward pass
    messages A-H. Message 1 of a later slice is message 7 of the slice before
    it, and message A of an earlier slice is message H of the slice after it,
    so those entries appear once. current_elevation and current_time only
    fix the clamp keys; their values are supplied by agent_clamps().
    """
    horizon = config.horizon
    variables = [_state(k) for k in range(horizon + 1)]
    factors = [FactorSpec("obs", PointMassInput(_state(0)), (_state(0),))]

    for k in range(horizon):
        x_k, x_next = _state(k), _state(k + 1)
        u, n, s, w = f"u{k}", f"n{k}", f"s{k}", f"w{k}"
        variables += [u, n, s, w]

        if config.is_chance_driven:
            auxiliary = ChanceConstraintNode(config.driver)
        else:
            auxiliary = GoalPriorNode(config.driver.gaussian)

        factors += [
            FactorSpec(f"prior_u{k}", PriorNode(Gaussian1D(0.0, 1.0 / config.control_precision)), (u,)),
            FactorSpec(f"noise{k}", GaussianNode(config.wind_variance, StateLink(x_k, x_next, w)), (u, n)),
            FactorSpec(f"add_u{k}", AdditionNode(), (x_k, n, s)),
            FactorSpec(f"wind{k}", PointMassInput(w), (w,)),
            FactorSpec(f"add_w{k}", AdditionNode(), (s, w, x_next)),
            FactorSpec(f"goal{k}", auxiliary, (x_next,)),
        ]

    factors.append(FactorSpec("end", TerminalNode(), (_state(horizon),)))
    graph = build_graph(variables, factors)

    auxiliary_rule = Rule.CHANCE if config.is_chance_driven else Rule.BP
    schedule: Schedule = []

    for k in range(horizon):
        x_k, x_next = _state(k), _state(k + 1)
        following = f"add_u{k + 1}" if k + 1 < horizon else "end"

        if k == 0:
            schedule.append(ScheduleEntry(x_k, f"add_u{k}", Rule.BP, f"1[{k}]"))

        schedule += [
            ScheduleEntry(f"u{k}", f"noise{k}", Rule.CLAMP, f"2[{k}]"),
            ScheduleEntry(f"noise{k}", f"n{k}", Rule.BP, f"3[{k}]"),
            ScheduleEntry(f"add_u{k}", f"s{k}", Rule.BP, f"4[{k}]"),
            ScheduleEntry(f"add_w{k}", x_next, Rule.BP, f"5[{k}]"),
            ScheduleEntry(f"goal{k}", x_next, auxiliary_rule, f"6[{k}]"),
            ScheduleEntry(x_next, following, Rule.BP, f"7[{k}]"),
        ]

    for k in reversed(range(horizon)):
        x_k, x_next = _state(k), _state(k + 1)

        if k == horizon - 1:
            schedule.append(ScheduleEntry("end", x_next, Rule.BP, f"A[{k}]"))

        schedule += [
            ScheduleEntry(x_next, f"goal{k}", Rule.BP, f"B[{k}]"),
            ScheduleEntry(x_next, f"add_w{k}", Rule.BP, f"C[{k}]"),
            ScheduleEntry(f"add_w{k}", f"s{k}", Rule.BP, f"D[{k}]"),
            ScheduleEntry(f"add_u{k}", f"n{k}", Rule.BP, f"E[{k}]"),
            ScheduleEntry(f"noise{k}", f"u{k}", Rule.VARIATIONAL, f"F[{k}]"),
            ScheduleEntry(f"prior_u{k}", f"u{k}", Rule.BP, f"G[{k}]"),
            ScheduleEntry(f"add_u{k}", x_k, Rule.BP, f"H[{k}]"),
        ]

    return graph, schedule


def agent_clamps(config: AgentConfig, current_elevation: float, current_time: int, actions: Sequence[float]) -> dict[str, float]:
    """Clamp map: observed elevation, expected wind per slice and the current actions."""
    clamps = {_state(0): float(current_elevation)}

    for k in range(config.horizon):
        clamps[f"w{k}"] = float(config.wind_mean_profile(current_time + k))
        clamps[f"u{k}"] = float(actions[k])

    return clamps


def _control_mode(board, k: int) -> float:
    variational = board.get(f"noise{k}", f"u{k}")
    prior = board.get(f"prior_u{k}", f"u{k}")

    if not (isinstance(variational, Gaussian1D) and isinstance(prior, Gaussian1D)):
        raise InferenceError(f"Control messages for u{k} are not proper Gaussians")

    return mode_of_product(variational, prior)


def _sweep_free_energy(graph: FactorGraph, board, clamps: dict[str, float], iteration: int) -> float:
    # Chance nodes carry a flat potential here; the correction cost is CorrectionDiagnostics.divergence.
    try:
        return bethe_free_energy(graph, board, clamps)

    except ChancexError as error:
        info_logger.warning(f"Free energy unavailable after sweep {iteration}: {error}")
        return math.nan


def infer_policy(config: AgentConfig, x_t: float, t: int) -> Policy:
    """
    Iterates the schedule until the actions settle.

    Each iteration clamps u_k to the previous actions, runs one
    forward-backward sweep and takes the mode of the control posterior.
    Messages from the previous sweep stay on the board (warm start). The
    first sweep sees uninformative backward messages, so convergence is only
    checked from the second sweep on.
    """
    if not math.isfinite(x_t):
        raise InferenceError(f"Current elevation must be finite, got {x_t}")

    graph, schedule = build_agent_graph(config, x_t, t)
    actions = [0.0] * config.horizon
    clamps = agent_clamps(config, x_t, t, actions)
    board = initialize_board(graph, clamps)

    converged = False
    iteration = 0
    free_energy = []

    for iteration in range(1, config.em_max_iters + 1):
        clamps = agent_clamps(config, x_t, t, actions)

        try:
            run_schedule(graph, board, schedule, clamps)
            updated = [_control_mode(board, k) for k in range(config.horizon)]

        except ChancexError as error:
            raise InferenceError(f"Policy inference failed at x_t={x_t}, t={t}, sweep {iteration}: {error}") from error

        free_energy.append(_sweep_free_energy(graph, board, clamps, iteration))
        change = max(abs(new - old) for new, old in zip(updated, actions))
        actions = updated

        if iteration >= 2 and change < config.em_tol:
            converged = True
            break

    if not converged:
        info_logger.warning(
            f"Policy did not converge within {config.em_max_iters} sweeps at x_t={x_t:.9g}, t={t} "
            f"(last change {change:.3g})"
        )

    diagnostics = tuple(board.diagnostics.get((f"goal{k}", _state(k + 1))) for k in range(config.horizon))

    return Policy(
        actions=tuple(actions),
        diagnostics=diagnostics,
        em_iterations=iteration,
        converged=converged,
        free_energy=tuple(free_energy)
    )


def control_law(config: AgentConfig, elevations: Iterable[float], t: int = 0) -> list[tuple[float, float]]:
    """
    First action as a function of the current elevation, with zero expected wind.

    Points whose inference fails are logged and reported with a NaN action.
    """
    calm = replace(config, wind_mean_profile=WindProfile.calm())
    law = []

    for x in elevations:
        x = float(x)

        try:
            policy = infer_policy(calm, x, t)
            law.append((x, policy.actions[0]))

        except ChancexError as error:
            error_logger.error(f"Control law failed at x_t={x:.9g}: {str(error)}", exc_info=True)
            law.append((x, math.nan))

    return law


def intervention_threshold(law: Sequence[tuple[float, float]], tol: float = 1e-3) -> float:
    """
    Smallest grid elevation from which every action is within tol of zero.

    Returns inf when the highest grid point still acts.
    """
    threshold = math.inf

    for x, a in sorted(law, reverse=True):
        if not abs(a) <= tol:
            break
        threshold = x

    return threshold

"""
Bipartite factor graphs with explicit message schedules.

A FactorGraph is static once built. Messages live on a MessageBoard keyed
by directed edge (source id, target id); clamped values (actions,
observations, fixed parameters) live in a plain dict passed to
run_schedule, so the same graph can be re-run with new clamps.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Union

import numpy as np

from chancexLib import rules
from chancexLib.chance_constraint import ChanceConstraintSpec, CorrectionDiagnostics, chance_message
from chancexLib.exceptions import ChancexError, GaussianError, GraphError, RuleError, ScheduleError
from chancexLib.gaussian_core import Gaussian1D, ImproperGaussian
from chancexLib.messages import (
    UNINFORMATIVE,
    Message,
    PointMass,
    multiply_messages,
)


@dataclass(frozen=True)
class AdditionNode:
    """sum(signs[i] * x_i) == 0 over ports (x_0, x_1, x_2); defaults to x_0 + x_1 = x_2."""

    signs: tuple[int, int, int] = rules.DEFAULT_SIGNS


@dataclass(frozen=True)
class StateLink:
    """Marks a GaussianNode whose output equals following - previous - offset."""

    previous: str
    following: str
    offset_key: str


@dataclass(frozen=True)
class GaussianNode:
    """N(out | mean, variance) over ports (mean, out)."""

    variance: float
    state_link: StateLink | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.variance) and self.variance > 0.0):
            raise GraphError(f"GaussianNode variance must be positive, got {self.variance}")


@dataclass(frozen=True)
class PriorNode:
    gaussian: Gaussian1D


@dataclass(frozen=True)
class GoalPriorNode:
    gaussian: Gaussian1D


@dataclass(frozen=True)
class PointMassInput:
    """Emits PointMass(clamps[source])."""

    source: str


@dataclass(frozen=True)
class ChanceConstraintNode:
    spec: ChanceConstraintSpec


@dataclass(frozen=True)
class TerminalNode:
    """Open end of a chain; always emits an uninformative message."""


NodeKind = Union[
    AdditionNode, GaussianNode, PriorNode, GoalPriorNode,
    PointMassInput, ChanceConstraintNode, TerminalNode,
]

ARITY = {
    AdditionNode: 3,
    GaussianNode: 2,
    PriorNode: 1,
    GoalPriorNode: 1,
    PointMassInput: 1,
    ChanceConstraintNode: 1,
    TerminalNode: 1,
}


class FactorSpec(NamedTuple):
    id: str
    kind: NodeKind
    ports: tuple[str, ...]


class FactorGraph:
    """Validated bipartite graph; build it with build_graph()."""

    def __init__(self, variables: Sequence[str], factors: Mapping[str, FactorSpec]) -> None:
        self._variables = tuple(variables)
        self._factors = dict(factors)
        self._neighbors: dict[str, list[str]] = {v: [] for v in self._variables}

        for spec in self._factors.values():
            for variable in spec.ports:
                self._neighbors[variable].append(spec.id)

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(self._variables)

    @property
    def factors(self) -> frozenset[str]:
        return frozenset(self._factors)

    @property
    def edges(self) -> frozenset[tuple[str, str]]:
        return frozenset((v, f.id) for f in self._factors.values() for v in f.ports)

    def is_variable(self, node_id: str) -> bool:
        return node_id in self._neighbors

    def is_factor(self, node_id: str) -> bool:
        return node_id in self._factors

    def kind(self, factor: str) -> NodeKind:
        return self._factors[factor].kind

    def ports(self, factor: str) -> tuple[str, ...]:
        """Variables of a factor in port order (the neighborhood V(a))."""
        return self._factors[factor].ports

    def factors_of(self, variable: str) -> tuple[str, ...]:
        """Factors attached to a variable (the neighborhood F(i))."""
        return tuple(self._neighbors[variable])

    def degree(self, variable: str) -> int:
        return len(self._neighbors[variable])

    def has_edge(self, source: str, target: str) -> bool:
        if self.is_variable(source) and self.is_factor(target):
            return source in self.ports(target)
        if self.is_factor(source) and self.is_variable(target):
            return target in self.ports(source)
        return False


def build_graph(variables: Iterable[str], factors: Iterable[FactorSpec]) -> FactorGraph:
    """
    Builds and validates a factor graph.

    Raises GraphError on duplicate ids, arity violations, edges to unknown
    variables, repeated edges and variables without any factor.
    """
    variables = list(variables)
    seen: set[str] = set()

    for variable in variables:
        if variable in seen:
            raise GraphError(f"Duplicate id: '{variable}'")
        seen.add(variable)

    by_id: dict[str, FactorSpec] = {}
    connected: set[str] = set()

    for spec in factors:
        spec = FactorSpec(spec[0], spec[1], tuple(spec[2]))

        if spec.id in seen:
            raise GraphError(f"Duplicate id: '{spec.id}'")
        seen.add(spec.id)

        arity = ARITY.get(type(spec.kind))
        if arity is None:
            raise GraphError(f"Factor '{spec.id}' has unknown node kind {type(spec.kind).__name__}")

        if len(spec.ports) != arity:
            raise GraphError(
                f"Factor '{spec.id}' ({type(spec.kind).__name__}) needs {arity} edges, got {len(spec.ports)}"
            )

        if len(set(spec.ports)) != len(spec.ports):
            raise GraphError(f"Factor '{spec.id}' connects the same variable twice")

        for variable in spec.ports:
            if variable not in variables:
                raise GraphError(f"Factor '{spec.id}' references unknown variable '{variable}'")
            connected.add(variable)

        by_id[spec.id] = spec

    dangling = [v for v in variables if v not in connected]
    if dangling:
        raise GraphError(f"Variables without factors: {', '.join(dangling)}")

    return FactorGraph(variables, by_id)


class MessageBoard:
    """Current message per directed edge; unset edges read as Uninformative."""

    def __init__(self) -> None:
        self._messages: dict[tuple[str, str], Message] = {}
        self.diagnostics: dict[tuple[str, str], CorrectionDiagnostics] = {}

    def get(self, source: str, target: str) -> Message:
        return self._messages.get((source, target), UNINFORMATIVE)

    def set(self, source: str, target: str, message: Message) -> None:
        self._messages[(source, target)] = message

    def __contains__(self, edge: tuple[str, str]) -> bool:
        return edge in self._messages

    def __len__(self) -> int:
        return len(self._messages)

    def items(self):
        return self._messages.items()

    def copy(self) -> "MessageBoard":
        board = MessageBoard()
        board._messages = dict(self._messages)
        board.diagnostics = dict(self.diagnostics)
        return board


class Rule(Enum):
    BP = "bp"
    VARIATIONAL = "variational"
    CHANCE = "chance"
    CLAMP = "clamp"


@dataclass(frozen=True)
class ScheduleEntry:
    source: str
    target: str
    rule: Rule = Rule.BP
    label: str = ""


Schedule = list[ScheduleEntry]


def validate_schedule(graph: FactorGraph, schedule: Sequence[ScheduleEntry]) -> None:
    """
    Checks every entry against the graph before anything is computed.

    :param graph: Graph the schedule runs on
    :param schedule: Ordered entries; each must name an existing directed edge
        and a rule its source node supports
    :raises GraphError: naming the position and label of the first bad entry
    """
    for position, entry in enumerate(schedule):
        where = f"Schedule entry {position} [{entry.label}] {entry.source}->{entry.target}"

        if not graph.has_edge(entry.source, entry.target):
            raise GraphError(f"{where}: no such edge")

        if entry.rule is Rule.CHANCE:
            if not graph.is_factor(entry.source) or not isinstance(graph.kind(entry.source), ChanceConstraintNode):
                raise GraphError(f"{where}: chance rule needs a chance-constraint node as source")

        elif entry.rule is Rule.VARIATIONAL:
            if not graph.is_factor(entry.source) or not isinstance(graph.kind(entry.source), GaussianNode):
                raise GraphError(f"{where}: variational rule needs a Gaussian node as source")
            if graph.ports(entry.source)[0] != entry.target:
                raise GraphError(f"{where}: variational rule only targets the mean port")

        elif entry.rule is Rule.CLAMP:
            if not graph.is_variable(entry.source):
                raise GraphError(f"{where}: clamp rule needs a variable as source")

        elif graph.is_factor(entry.source) and isinstance(graph.kind(entry.source), ChanceConstraintNode):
            raise GraphError(f"{where}: chance-constraint nodes only support the chance rule")


def inbound_message(graph: FactorGraph, board: MessageBoard, variable: str, factor: str) -> Message:
    """
    Variable-to-factor message as seen by `factor`.

    A stored message wins. Otherwise a variable of degree <= 2 passes the
    product of its other factor messages through; a higher-degree variable
    without a stored message reads as Uninformative.
    """
    if (variable, factor) in board:
        return board.get(variable, factor)

    if graph.degree(variable) <= 2:
        return multiply_messages(
            board.get(other, variable) for other in graph.factors_of(variable) if other != factor
        )

    return UNINFORMATIVE


def variable_belief(graph: FactorGraph, board: MessageBoard, variable: str) -> Gaussian1D:
    """Normalized product of every factor-to-variable message on `variable`."""
    belief = multiply_messages(board.get(f, variable) for f in graph.factors_of(variable))

    if isinstance(belief, PointMass):
        raise GaussianError(f"Variable '{variable}' is clamped to {belief.value}; use variable_marginal")

    if not isinstance(belief, Gaussian1D):
        raise GaussianError(f"Belief over '{variable}' is improper ({type(belief).__name__})")

    return belief


def variable_marginal(graph: FactorGraph, board: MessageBoard, variable: str) -> Gaussian1D | PointMass:
    """Like variable_belief, but returns the PointMass of a clamped variable."""
    belief = multiply_messages(board.get(f, variable) for f in graph.factors_of(variable))

    if isinstance(belief, PointMass):
        return belief

    if not isinstance(belief, Gaussian1D):
        raise GaussianError(f"Belief over '{variable}' is improper ({type(belief).__name__})")

    return belief


def _clamped(clamps: Mapping[str, float], key: str) -> PointMass:
    try:
        return PointMass(clamps[key])

    except KeyError:
        raise RuleError(f"No clamped value for '{key}'") from None


def initialize_board(graph: FactorGraph, clamps: Mapping[str, float], board: MessageBoard | None = None) -> MessageBoard:
    """Writes the constant outbound messages of prior, point-mass and terminal nodes."""
    board = MessageBoard() if board is None else board

    for factor in sorted(graph.factors):
        kind = graph.kind(factor)
        variable = graph.ports(factor)[0]

        if isinstance(kind, (PriorNode, GoalPriorNode)):
            board.set(factor, variable, rules.prior_message(kind))
        elif isinstance(kind, PointMassInput):
            board.set(factor, variable, _clamped(clamps, kind.source))
        elif isinstance(kind, TerminalNode):
            board.set(factor, variable, UNINFORMATIVE)

    return board


def _factor_message(graph: FactorGraph, board: MessageBoard, entry: ScheduleEntry, clamps: Mapping[str, float]) -> Message:
    factor, target = entry.source, entry.target
    kind = graph.kind(factor)
    ports = graph.ports(factor)
    port = ports.index(target)

    if isinstance(kind, (PriorNode, GoalPriorNode)):
        return rules.prior_message(kind)

    if isinstance(kind, PointMassInput):
        return _clamped(clamps, kind.source)

    if isinstance(kind, TerminalNode):
        return UNINFORMATIVE

    if isinstance(kind, ChanceConstraintNode):
        message, diagnostics = chance_message(inbound_message(graph, board, target, factor), kind.spec)
        board.diagnostics[(factor, target)] = diagnostics
        return message

    if isinstance(kind, AdditionNode):
        inbound = [
            UNINFORMATIVE if i == port else inbound_message(graph, board, variable, factor)
            for i, variable in enumerate(ports)
        ]
        return rules.bp_addition(inbound, port, kind.signs)

    if isinstance(kind, GaussianNode):
        if entry.rule is Rule.VARIATIONAL:
            link = kind.state_link
            if link is None:
                return rules.variational_mean_message(variable_marginal(graph, board, ports[1]), kind.variance)

            return rules.variational_control_message(
                variable_marginal(graph, board, link.previous),
                variable_marginal(graph, board, link.following),
                _clamped(clamps, link.offset_key).value,
                kind.variance
            )

        other = ports[1 - port]
        direction = "forward" if port == 1 else "backward"
        return rules.bp_gaussian_node(inbound_message(graph, board, other, factor), kind.variance, direction)

    raise RuleError(f"No rule for node kind {type(kind).__name__}")


def run_schedule(
    graph: FactorGraph,
    board: MessageBoard,
    schedule: Sequence[ScheduleEntry],
    clamps: Mapping[str, float] | None = None
) -> MessageBoard:
    """
    Executes the schedule in order, storing every computed message on the board.

    Rule failures are re-raised as ScheduleError naming the entry position.
    """
    clamps = {} if clamps is None else clamps

    for position, entry in enumerate(schedule):
        try:
            if graph.is_variable(entry.source):
                if entry.rule is Rule.CLAMP:
                    message = _clamped(clamps, entry.source)
                else:
                    message = multiply_messages(
                        board.get(f, entry.source) for f in graph.factors_of(entry.source) if f != entry.target
                    )
            else:
                message = _factor_message(graph, board, entry, clamps)

        except ChancexError as error:
            raise ScheduleError(
                f"Schedule entry {position} [{entry.label}] {entry.source}->{entry.target} failed: {error}",
                position,
                entry.label
            ) from error

        board.set(entry.source, entry.target, message)

    return board


_LOG_TWO_PI = math.log(2.0 * math.pi)


def _observed_values(graph: FactorGraph, board: MessageBoard, clamps: Mapping[str, float]) -> dict[str, float]:
    observed = {}

    for variable in graph.variables:
        if variable in clamps:
            observed[variable] = float(clamps[variable])
            continue

        product = multiply_messages(board.get(f, variable) for f in graph.factors_of(variable))
        if isinstance(product, PointMass):
            observed[variable] = product.value

    return observed


def _log_potential(kind: NodeKind, arity: int) -> tuple[np.ndarray, np.ndarray, float]:
    """log f(x) = -x'Jx/2 + h'x + c over the factor's ports; additions are flat on their constraint surface."""
    if isinstance(kind, (PriorNode, GoalPriorNode)):
        g = kind.gaussian
        return (
            np.array([[g.precision]]),
            np.array([g.weighted_mean]),
            -0.5 * (g.mean * g.weighted_mean + _LOG_TWO_PI + math.log(g.variance))
        )

    if isinstance(kind, GaussianNode):
        coupling = np.array([[1.0, -1.0], [-1.0, 1.0]]) / kind.variance
        return coupling, np.zeros(2), -0.5 * (_LOG_TWO_PI + math.log(kind.variance))

    return np.zeros((arity, arity)), np.zeros(arity), 0.0


def _factor_coordinates(graph: FactorGraph, factor: str, observed: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Affine map x = A z + b from the factor's free coordinates z to its ports."""
    ports = graph.ports(factor)
    kind = graph.kind(factor)
    latent = [i for i, v in enumerate(ports) if v not in observed]
    offset = np.array([observed.get(v, 0.0) for v in ports])

    if isinstance(kind, AdditionNode) and latent:
        if len(latent) == 1:
            raise GaussianError(
                f"'{ports[latent[0]]}' is fixed by the observed ports of '{factor}'; clamp it instead"
            )

        signs = np.array(kind.signs, dtype=np.float64)
        eliminated, free = latent[-1], latent[:-1]
        observed_ports = [i for i in range(len(ports)) if i not in latent]

        basis = np.zeros((len(ports), len(free)))
        for column, i in enumerate(free):
            basis[i, column] = 1.0
            basis[eliminated, column] = -signs[i] / signs[eliminated]

        offset[eliminated] = -sum(signs[i] * offset[i] for i in observed_ports) / signs[eliminated]
        return basis, offset, latent

    basis = np.zeros((len(ports), len(latent)))
    for column, i in enumerate(latent):
        basis[i, column] = 1.0

    return basis, offset, latent


def _factor_term(graph: FactorGraph, board: MessageBoard, factor: str, observed: Mapping[str, float]) -> float:
    ports = graph.ports(factor)
    basis, offset, latent = _factor_coordinates(graph, factor, observed)
    coupling, shift, constant = _log_potential(graph.kind(factor), len(ports))

    if basis.shape[1] == 0:
        return -float(-0.5 * offset @ coupling @ offset + shift @ offset + constant)

    precisions = np.zeros(len(ports))
    weighted = np.zeros(len(ports))

    for i in latent:
        variable = ports[i]
        inbound = multiply_messages(board.get(f, variable) for f in graph.factors_of(variable) if f != factor)
        if isinstance(inbound, (Gaussian1D, ImproperGaussian)):
            precisions[i], weighted[i] = inbound.to_canonical()

    joint = coupling + np.diag(precisions)
    precision = basis.T @ joint @ basis
    information = basis.T @ (shift + weighted - joint @ offset)

    try:
        cholesky = np.linalg.cholesky(precision)

    except np.linalg.LinAlgError:
        raise GaussianError(f"Belief of factor '{factor}' is improper") from None

    covariance = np.linalg.inv(precision)
    mean = covariance @ information
    port_mean = basis @ mean + offset
    port_covariance = basis @ covariance @ basis.T

    rank = basis.shape[1]
    entropy = 0.5 * rank * (_LOG_TWO_PI + 1.0) - float(np.sum(np.log(np.diag(cholesky))))
    expected_log_f = (
        -0.5 * (port_mean @ coupling @ port_mean + np.trace(coupling @ port_covariance))
        + shift @ port_mean
        + constant
    )

    return float(-entropy - expected_log_f)


def bethe_free_energy(graph: FactorGraph, board: MessageBoard, clamps: Mapping[str, float] | None = None) -> float:
    """
    Bethe free energy of the beliefs implied by the board.

    Factor beliefs are rebuilt from the stored factor-to-variable messages
    (the message into a factor is the product of the variable's other
    incoming messages), so normalizers never have to be tracked on the
    board. Variables listed in `clamps` or receiving a point mass are
    observed and drop out of the entropy terms. Addition nodes are
    integrated on their constraint surface; chance-constraint and terminal
    nodes carry a flat potential. On a tree at a BP fixed point the result
    is -log of the evidence of the observed values.

    :param graph: Linear-Gaussian factor graph
    :param board: Messages after a schedule run
    :param clamps: Observed values by variable id
    :return: sum_a KL(q_a || f_a) + sum_i (d_i - 1) H[q_i] over latent variables
    :raises GaussianError: when a factor or variable belief is improper
    """
    observed = _observed_values(graph, board, {} if clamps is None else clamps)
    energy = 0.0

    for factor in sorted(graph.factors):
        if isinstance(graph.kind(factor), PointMassInput):
            continue
        energy += _factor_term(graph, board, factor, observed)

    for variable in sorted(graph.variables):
        if variable in observed:
            continue

        belief = variable_belief(graph, board, variable)
        entropy = 0.5 * (_LOG_TWO_PI + 1.0 + math.log(belief.variance))
        energy += (graph.degree(variable) - 1) * entropy

    return energy

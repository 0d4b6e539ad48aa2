"""
Chance-constrained message passing.

A chance constraint asks that a belief q(x) keeps at least 1 - epsilon of
its mass inside a safe interval S. When the uncorrected belief violates it,
the optimal correction rescales q by (1 - epsilon)/Phi inside S and by
epsilon/(1 - Phi) outside, Phi being the uncorrected safe mass. The
auxiliary constraint node sends the message that turns the inbound belief
into (a Gaussian approximation of) this correction; the approximation is
re-corrected until the safe mass is within delta of the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from chancexLib.exceptions import ChanceConstraintError, FlatTiltError
from chancexLib.gaussian_core import (
    MASS_UNDERFLOW,
    VARIANCE_FLOOR,
    Gaussian1D,
    TruncatedMoments,
    divide,
    truncated_moments,
)
from chancexLib.initialize_loggers import setup_loggers
from chancexLib.messages import UNINFORMATIVE, Message, Uninformative, as_message

error_logger, info_logger = setup_loggers()

DEFAULT_DELTA = 1e-4
DEFAULT_MAX_ITERATIONS = 100


@dataclass(frozen=True)
class SafeRegion:
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self) -> None:
        lower = float(self.lower)
        upper = float(self.upper)

        if math.isnan(lower) or math.isnan(upper) or not lower < upper:
            raise ChanceConstraintError(f"Safe region needs lower < upper, got ({lower}, {upper})")

        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def is_vacuous(self) -> bool:
        return math.isinf(self.lower) and math.isinf(self.upper)

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        return (x >= self.lower) & (x <= self.upper)

    def unsafe_intervals(self) -> list[tuple[float, float]]:
        intervals = []
        if not math.isinf(self.lower):
            intervals.append((-math.inf, self.lower))
        if not math.isinf(self.upper):
            intervals.append((self.upper, math.inf))
        return intervals


@dataclass(frozen=True)
class ChanceConstraintSpec:
    region: SafeRegion
    epsilon: float
    delta: float = DEFAULT_DELTA
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ChanceConstraintError(f"epsilon must lie in (0, 1), got {self.epsilon}")

        if not self.delta >= 0.0:
            raise ChanceConstraintError(f"delta must be non-negative, got {self.delta}")

        if not self.epsilon + self.delta < 1.0:
            raise ChanceConstraintError("epsilon + delta must stay below 1")

        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ChanceConstraintError(f"max_iterations must be a positive integer, got {self.max_iterations}")


@dataclass(frozen=True)
class CorrectionDiagnostics:
    iterations: int
    safe_mass_initial: float
    safe_mass_final: float
    eta_star: float
    activated: bool
    divergence: float = 0.0
    anomalies: int = 0

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "safe_mass_initial": self.safe_mass_initial,
            "safe_mass_final": self.safe_mass_final,
            "eta_star": self.eta_star,
            "activated": self.activated,
            "divergence": self.divergence,
            "anomalies": self.anomalies,
        }


@dataclass(frozen=True)
class CorrectionPiece:
    lower: float
    upper: float
    weight: float
    moments: TruncatedMoments
    safe: bool


@dataclass(frozen=True)
class CorrectedBelief:
    """Piecewise-rescaled belief: belief.pdf times safe_scale inside S, unsafe_scale outside."""

    belief: Gaussian1D
    region: SafeRegion
    safe_scale: float
    unsafe_scale: float
    pieces: tuple[CorrectionPiece, ...]
    active: bool

    def density(self, x):
        x = np.asarray(x, dtype=np.float64)
        scale = np.where(self.region.contains(x), self.safe_scale, self.unsafe_scale)
        return scale * self.belief.pdf(x)

    @property
    def safe_weight(self) -> float:
        return sum(piece.weight for piece in self.pieces if piece.safe)


def safe_mass(belief: Gaussian1D, region: SafeRegion) -> float:
    """
    Probability that the belief places inside the safe region.

    :param belief: Gaussian belief over the constrained variable
    :param region: Safe interval; a vacuous region has mass 1
    :return: Mass in [0, 1], computed with tail-stable normal CDFs
    """
    if region.is_vacuous:
        return 1.0
    return truncated_moments(belief, region.lower, region.upper).mass


def correct_belief(belief: Gaussian1D, spec: ChanceConstraintSpec) -> CorrectedBelief:
    """
    Exact corrected belief as a truncated mixture.

    Inactive constraints (safe mass >= 1 - epsilon) give the identity
    correction with unit scales. With a two-sided region the unsafe weight
    epsilon is split over both tails in proportion to their uncorrected mass.
    """
    region = spec.region

    if region.is_vacuous:
        full = truncated_moments(belief, -math.inf, math.inf)
        piece = CorrectionPiece(-math.inf, math.inf, 1.0, full, True)
        return CorrectedBelief(belief, region, 1.0, 1.0, (piece,), False)

    inside = truncated_moments(belief, region.lower, region.upper)
    if inside.underflow or inside.mass < MASS_UNDERFLOW:
        raise ChanceConstraintError(
            f"Belief N({belief.mean:.6g}, {belief.variance:.6g}) has no representable mass in the "
            f"safe region ({region.lower}, {region.upper}); widen the priors"
        )

    outside = [(lo, hi, truncated_moments(belief, lo, hi)) for lo, hi in region.unsafe_intervals()]
    unsafe_mass = sum(m.mass for _, _, m in outside)
    active = inside.mass < 1.0 - spec.epsilon

    if active:
        safe_scale = (1.0 - spec.epsilon) / inside.mass
        unsafe_scale = spec.epsilon / unsafe_mass
    else:
        safe_scale = 1.0
        unsafe_scale = 1.0

    pieces = [CorrectionPiece(region.lower, region.upper, safe_scale * inside.mass, inside, True)]
    for lo, hi, moments in outside:
        pieces.append(CorrectionPiece(lo, hi, unsafe_scale * moments.mass, moments, False))

    return CorrectedBelief(belief, region, safe_scale, unsafe_scale, tuple(pieces), active)


def moment_match_correction(belief: Gaussian1D, spec: ChanceConstraintSpec) -> Gaussian1D:
    """Gaussian with the mean and variance of the corrected belief (identity when inactive)."""
    corrected = correct_belief(belief, spec)
    if not corrected.active:
        return belief

    assert abs(corrected.safe_weight - (1.0 - spec.epsilon)) < 1e-12

    pieces = [p for p in corrected.pieces if p.weight > 0.0]
    total = sum(p.weight for p in pieces)
    mean = sum(p.weight * p.moments.mean for p in pieces) / total
    variance = sum(p.weight * (p.moments.variance + (p.moments.mean - mean) ** 2) for p in pieces) / total

    return Gaussian1D(mean, max(variance, VARIANCE_FLOOR))


def eta_star(phi0: float, epsilon: float) -> float:
    """
    Optimal multiplier log(eps*Phi) - log(1-eps) - log(1-Phi); zero on the activation boundary.

    Only defined where the constraint binds, 0 < Phi <= 1 - epsilon.
    """
    if not 0.0 < epsilon < 1.0:
        raise ChanceConstraintError(f"epsilon must lie in (0, 1), got {epsilon}")

    if not 0.0 < phi0 <= 1.0 - epsilon:
        raise ChanceConstraintError(f"Safe mass must lie in (0, {1.0 - epsilon:.9g}] for epsilon={epsilon}, got {phi0}")

    return math.log(epsilon * phi0) - math.log1p(-epsilon) - math.log1p(-phi0)


def correction_divergence(phi0: float, epsilon: float) -> float:
    """KL divergence of the exact corrected belief from the uncorrected one (0 when inactive)."""
    if phi0 >= 1.0 - epsilon:
        return 0.0

    return (1.0 - epsilon) * math.log((1.0 - epsilon) / phi0) + epsilon * math.log(epsilon / (1.0 - phi0))


def chance_message(inbound: Message, spec: ChanceConstraintSpec) -> tuple[Message, CorrectionDiagnostics]:
    """
    Outbound message of a chance-constraint node, given the message arriving from its variable.

    The inbound message doubles as the uncorrected belief. While the
    approximated belief keeps more than epsilon + delta of its mass outside
    S it is re-corrected and re-matched; the result divided by the inbound
    message is returned. The outbound message may be improper.
    """
    if isinstance(inbound, Uninformative):
        nan = float("nan")
        return UNINFORMATIVE, CorrectionDiagnostics(0, nan, nan, 0.0, False)

    if not isinstance(inbound, Gaussian1D):
        raise ChanceConstraintError(
            f"Chance constraint needs a proper Gaussian inbound message, got {type(inbound).__name__}"
        )

    phi0 = safe_mass(inbound, spec.region)
    if phi0 < MASS_UNDERFLOW:
        raise ChanceConstraintError(
            f"Inbound belief N({inbound.mean:.6g}, {inbound.variance:.6g}) is entirely unsafe; widen the priors"
        )

    if not phi0 < 1.0 - spec.epsilon:
        return UNINFORMATIVE, CorrectionDiagnostics(0, phi0, phi0, 0.0, False)

    eta = eta_star(phi0, spec.epsilon)
    divergence = correction_divergence(phi0, spec.epsilon)

    current = inbound
    phi = phi0
    iterations = 0
    anomalies = 0

    while spec.epsilon + spec.delta < 1.0 - phi:
        if iterations >= spec.max_iterations:
            diagnostics = CorrectionDiagnostics(iterations, phi0, phi, eta, True, divergence, anomalies)
            raise ChanceConstraintError(
                f"Correction did not reach safe mass {1.0 - spec.epsilon - spec.delta:.6g} "
                f"within {spec.max_iterations} iterations (reached {phi:.9g})",
                diagnostics
            )

        iterations += 1
        current = moment_match_correction(current, spec)
        next_phi = safe_mass(current, spec.region)

        if next_phi < phi:
            anomalies += 1
            info_logger.warning(
                f"Safe mass decreased from {phi:.9g} to {next_phi:.9g} at correction iteration {iterations}"
            )

        phi = next_phi

    diagnostics = CorrectionDiagnostics(iterations, phi0, phi, eta, True, divergence, anomalies)

    if iterations == 0:
        return UNINFORMATIVE, diagnostics

    try:
        outbound = as_message(divide(current, inbound))

    except FlatTiltError:
        info_logger.warning("Chance message reduced to a pure tilt; sending an uninformative message")
        outbound = UNINFORMATIVE

    return outbound, diagnostics

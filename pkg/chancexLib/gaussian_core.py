"""
Univariate Gaussian arithmetic and truncated-Gaussian moments.

Every message and belief in chancex is built from the types in this module.
Gaussians are stored in moment form (mean, variance) and expose their
canonical statistics (precision, weighted mean) for products and quotients.
Quotients may leave a non-normalizable result; those are carried as
ImproperGaussian and only become beliefs again after recombination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, ndtr

from chancexLib.exceptions import FlatTiltError, GaussianError

VARIANCE_FLOOR = 1e-12
MASS_UNDERFLOW = 1e-300

_SQRT_HALF = math.sqrt(0.5)
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
_INV_SQRT_TWO_PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Gaussian1D:
    """Proper univariate Gaussian N(mean, variance)."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        mean = float(self.mean)
        variance = float(self.variance)

        if not math.isfinite(mean):
            raise GaussianError(f"Gaussian mean must be finite, got {mean}")

        if not math.isfinite(variance) or variance <= 0.0:
            raise GaussianError(f"Gaussian variance must be positive and finite, got {variance}")

        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", max(variance, VARIANCE_FLOOR))

    @property
    def precision(self) -> float:
        return 1.0 / self.variance

    @property
    def weighted_mean(self) -> float:
        return self.mean / self.variance

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def to_canonical(self) -> tuple[float, float]:
        """Returns (precision, weighted_mean)."""
        return self.precision, self.weighted_mean

    @classmethod
    def from_canonical(cls, precision: float, weighted_mean: float) -> "Gaussian1D":
        if not precision > 0.0:
            raise GaussianError(f"Canonical precision must be positive for a proper Gaussian, got {precision}")
        return cls(weighted_mean / precision, 1.0 / precision)

    def pdf(self, x):
        """Density at x (scalar or array)."""
        x = np.asarray(x, dtype=np.float64)
        return np.exp(-0.5 * (x - self.mean) ** 2 / self.variance) * _INV_SQRT_TWO_PI / self.std


@dataclass(frozen=True)
class ImproperGaussian:
    """
    Non-normalizable Gaussian-shaped function exp(weighted_mean*x - precision*x^2/2)
    with precision <= 0. Produced by division; never a belief.
    """

    precision: float
    weighted_mean: float

    def __post_init__(self) -> None:
        precision = float(self.precision)
        weighted_mean = float(self.weighted_mean)

        if not (math.isfinite(precision) and math.isfinite(weighted_mean)):
            raise GaussianError("Improper Gaussian statistics must be finite")

        if precision > 0.0:
            raise GaussianError(f"Improper Gaussian must have non-positive precision, got {precision}")

        object.__setattr__(self, "precision", precision)
        object.__setattr__(self, "weighted_mean", weighted_mean)

    def to_canonical(self) -> tuple[float, float]:
        return self.precision, self.weighted_mean


@dataclass(frozen=True)
class TruncatedMoments:
    """Mass, mean and variance of a Gaussian restricted to an interval."""

    mass: float
    mean: float
    variance: float
    underflow: bool = False


def from_canonical(precision: float, weighted_mean: float) -> Gaussian1D | ImproperGaussian | None:
    """
    Builds the carrier that matches a pair of canonical statistics.

    Returns a Gaussian1D for positive precision, an ImproperGaussian for
    negative precision, and None (flat) when both statistics are zero.
    Zero precision with a non-zero weighted mean raises FlatTiltError.
    """
    if precision > 0.0:
        return Gaussian1D.from_canonical(precision, weighted_mean)

    if precision == 0.0:
        if weighted_mean == 0.0:
            return None
        raise FlatTiltError(f"Zero precision with weighted mean {weighted_mean}")

    return ImproperGaussian(precision, weighted_mean)


def multiply(a: Gaussian1D, b: Gaussian1D) -> Gaussian1D:
    """Normalized product of two Gaussians (canonical statistics add)."""
    return Gaussian1D.from_canonical(
        a.precision + b.precision,
        a.weighted_mean + b.weighted_mean
    )


def divide(num: Gaussian1D, den: Gaussian1D) -> Gaussian1D | ImproperGaussian | None:
    """
    Quotient num/den by canonical subtraction.

    An ImproperGaussian return value is the flag for a non-normalizable
    quotient; None means the quotient is flat.
    """
    return from_canonical(
        num.precision - den.precision,
        num.weighted_mean - den.weighted_mean
    )


def mode_of_product(a: Gaussian1D, b: Gaussian1D) -> float:
    """
    Mode of the normalized product a*b (equal to its mean).

    :param a: First factor, e.g. the variational message toward a control
    :param b: Second factor, e.g. the control prior
    :return: Location of the maximum of a*b
    """
    return multiply(a, b).mean


def _phi(z: float) -> float:
    if math.isinf(z):
        return 0.0
    return _INV_SQRT_TWO_PI * math.exp(-0.5 * z * z)


def _standard_moments(alpha: float, beta: float) -> tuple[float, float, float]:
    """Mass, mean and variance of N(0,1) restricted to [alpha, beta]."""
    if alpha == -math.inf and beta == math.inf:
        return 1.0, 0.0, 1.0

    # Interval entirely in the lower half: mirror it into the upper tail
    if beta <= 0.0:
        mass, mean, variance = _standard_moments(-beta, -alpha)
        return mass, -mean, variance

    if alpha >= 0.0:
        # Upper-tail form, everything scaled by phi(alpha) and written with erfcx
        if math.isinf(beta):
            ratio = 0.0
            beta_term = 0.0
            upper_tail = 0.0
        else:
            ratio = math.exp(-0.5 * (beta - alpha) * (beta + alpha))
            beta_term = beta * ratio
            upper_tail = ratio * float(erfcx(beta * _SQRT_HALF))

        scaled_mass = _SQRT_HALF_PI * (float(erfcx(alpha * _SQRT_HALF)) - upper_tail)
        if not scaled_mass > 0.0:
            return 0.0, alpha, 0.0

        mass = scaled_mass * _phi(alpha)
        mean = (1.0 - ratio) / scaled_mass
        variance = 1.0 + (alpha - beta_term) / scaled_mass - mean * mean
        return mass, mean, variance

    mass = float(ndtr(beta) - ndtr(alpha))
    if not mass > 0.0:
        return 0.0, alpha, 0.0

    phi_alpha = _phi(alpha)
    phi_beta = _phi(beta)
    alpha_term = 0.0 if math.isinf(alpha) else alpha * phi_alpha
    beta_term = 0.0 if math.isinf(beta) else beta * phi_beta
    mean = (phi_alpha - phi_beta) / mass
    variance = 1.0 + (alpha_term - beta_term) / mass - mean * mean
    return mass, mean, variance


def truncated_moments(g: Gaussian1D, lower: float, upper: float) -> TruncatedMoments:
    """
    Moments of g restricted to [lower, upper]; either bound may be infinite.

    When the enclosed mass underflows below 1e-300 the result has mass 0,
    the mean clamped to the nearest bound, variance 0 and underflow=True.
    """
    lower = float(lower)
    upper = float(upper)

    if math.isnan(lower) or math.isnan(upper) or not lower < upper:
        raise GaussianError(f"Truncation interval must satisfy lower < upper, got [{lower}, {upper}]")

    alpha = (lower - g.mean) / g.std
    beta = (upper - g.mean) / g.std
    mass, mean_std, var_std = _standard_moments(alpha, beta)

    if not mass >= MASS_UNDERFLOW:
        nearest = lower if g.mean < lower else upper
        return TruncatedMoments(mass=0.0, mean=nearest, variance=0.0, underflow=True)

    var_std = min(max(var_std, 0.0), 1.0)
    return TruncatedMoments(
        mass=min(mass, 1.0),
        mean=g.mean + g.std * mean_std,
        variance=g.variance * var_std
    )

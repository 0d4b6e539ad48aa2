"""
Message carriers exchanged on factor-graph edges.

A message is one of:
  Gaussian1D        normalized Gaussian in moment form
  ImproperGaussian  non-normalizable quotient (canonical statistics)
  PointMass         clamped value (controls, observations, fixed parameters)
  Uninformative     flat message, the identity of the product
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Union

from chancexLib.exceptions import RuleError
from chancexLib.gaussian_core import Gaussian1D, ImproperGaussian


@dataclass(frozen=True)
class PointMass:
    value: float

    def __post_init__(self) -> None:
        value = float(self.value)
        if not math.isfinite(value):
            raise RuleError(f"Point mass must sit at a finite value, got {value}")
        object.__setattr__(self, "value", value)


@dataclass(frozen=True)
class Uninformative:
    pass


UNINFORMATIVE = Uninformative()

Message = Union[Gaussian1D, ImproperGaussian, PointMass, Uninformative]


def as_message(carrier: Gaussian1D | ImproperGaussian | None) -> Message:
    """Maps a gaussian_core quotient (None = flat) onto the message union."""
    return UNINFORMATIVE if carrier is None else carrier


def multiply_messages(messages: Iterable[Message]) -> Message:
    """
    Product of messages, returned in normalized form.

    Uninformative messages drop out, a PointMass absorbs every density it
    meets, and Gaussian/improper carriers add canonical statistics. The
    product of nothing is Uninformative.
    """
    point = None
    precision = 0.0
    weighted_mean = 0.0
    has_density = False

    for msg in messages:
        if isinstance(msg, Uninformative):
            continue

        if isinstance(msg, PointMass):
            if point is not None and point.value != msg.value:
                raise RuleError(f"Conflicting point masses at {point.value} and {msg.value}")
            point = msg
            continue

        if not isinstance(msg, (Gaussian1D, ImproperGaussian)):
            raise RuleError(f"Unsupported message type: {type(msg).__name__}")

        p, w = msg.to_canonical()
        precision += p
        weighted_mean += w
        has_density = True

    if point is not None:
        return point

    if not has_density:
        return UNINFORMATIVE

    if precision > 0.0:
        return Gaussian1D.from_canonical(precision, weighted_mean)

    if precision == 0.0 and weighted_mean == 0.0:
        return UNINFORMATIVE

    return ImproperGaussian(precision, weighted_mean)


def message_moments(msg: Message) -> tuple[float, float] | None:
    """
    Formal (mean, variance) used by the sum rules.

    Point masses have variance 0 and improper carriers a negative variance.
    Returns None for flat messages (Uninformative or zero precision).
    """
    if isinstance(msg, Gaussian1D):
        return msg.mean, msg.variance

    if isinstance(msg, PointMass):
        return msg.value, 0.0

    if isinstance(msg, ImproperGaussian):
        if msg.precision == 0.0:
            return None
        return msg.weighted_mean / msg.precision, 1.0 / msg.precision

    return None


def from_moments(mean: float, variance: float) -> Message:
    """Inverse of message_moments for non-flat results."""
    if variance > 0.0:
        return Gaussian1D(mean, variance)

    if variance == 0.0:
        return PointMass(mean)

    return ImproperGaussian(1.0 / variance, mean / variance)


def message_mean(msg: Message) -> float:
    """Mean of a Gaussian or location of a PointMass."""
    if isinstance(msg, Gaussian1D):
        return msg.mean

    if isinstance(msg, PointMass):
        return msg.value

    raise RuleError(f"Message of type {type(msg).__name__} has no mean")

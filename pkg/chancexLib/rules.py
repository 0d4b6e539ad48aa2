"""
Message update rules for the linear-Gaussian node kinds.

Sum-product rules for addition and fixed-variance Gaussian nodes, the
mean-field (variational) rule toward the control of a Gaussian transition
node, and the constant prior rule. All functions are pure.
"""

from __future__ import annotations

from collections.abc import Sequence

from chancexLib.exceptions import RuleError
from chancexLib.gaussian_core import Gaussian1D
from chancexLib.messages import (
    UNINFORMATIVE,
    Message,
    PointMass,
    from_moments,
    message_mean,
    message_moments,
)

DEFAULT_SIGNS = (1, 1, -1)


def bp_addition(inbound: Sequence[Message], target: int, signs: Sequence[int] = DEFAULT_SIGNS) -> Message:
    """
    Sum-product message of an addition node toward port `target`.

    The node enforces sum(signs[i] * x_i) == 0. With the default signs
    (1, 1, -1) that is x_0 + x_1 = x_2. Inbound messages on the target port
    are ignored. Any flat inbound message makes the result flat.
    """
    if len(inbound) != len(signs):
        raise RuleError(f"Addition node expects {len(signs)} inbound messages, got {len(inbound)}")

    if any(s not in (1, -1) for s in signs):
        raise RuleError(f"Addition signs must be +1 or -1, got {tuple(signs)}")

    mean = 0.0
    variance = 0.0

    for port, (msg, sign) in enumerate(zip(inbound, signs)):
        if port == target:
            continue

        moments = message_moments(msg)
        if moments is None:
            return UNINFORMATIVE

        mean += sign * moments[0]
        variance += moments[1]

    mean = -signs[target] * mean

    if variance == 0.0 and not all(
        isinstance(msg, PointMass) for port, msg in enumerate(inbound) if port != target
    ):
        raise RuleError("Improper inbound variances cancel exactly on the addition node")

    return from_moments(mean, variance)


def bp_addition_forward(in1: Message, in2: Message) -> Message:
    """Message toward z for z = x + y."""
    return bp_addition((in1, in2, UNINFORMATIVE), 2)


def bp_addition_backward(out: Message, other: Message, target: int = 0) -> Message:
    """Message toward addend `target` (0 or 1) of z = x + y, given z and the other addend."""
    if target not in (0, 1):
        raise RuleError(f"Backward addition target must be 0 or 1, got {target}")

    inbound = [UNINFORMATIVE, UNINFORMATIVE, out]
    inbound[1 - target] = other
    return bp_addition(inbound, target)


def bp_gaussian_node(inbound: Message, fixed_variance: float, direction: str = "forward") -> Message:
    """
    Sum-product message through N(out | mean, fixed_variance).

    direction="forward" maps a mean-port message to the output port,
    "backward" maps an output-port message to the mean port; the rule is
    the same convolution either way.
    """
    if direction not in ("forward", "backward"):
        raise RuleError(f"Unknown direction '{direction}'")

    if not fixed_variance > 0.0:
        raise RuleError(f"Gaussian node variance must be positive, got {fixed_variance}")

    moments = message_moments(inbound)
    if moments is None:
        return UNINFORMATIVE

    return from_moments(moments[0], moments[1] + fixed_variance)


def variational_control_message(q_xk: Message, q_xk1: Message, m_w: float, v_w: float) -> Gaussian1D:
    """
    Mean-field message toward u_k from N(x_{k+1} | x_k + u_k + m_w, v_w).

    exp(E[log f]) under the current state marginals is Gaussian in u_k with
    mean E[x_{k+1}] - E[x_k] - m_w and variance v_w; the marginal variances
    do not enter.
    """
    if not v_w > 0.0:
        raise RuleError(f"Wind variance must be positive, got {v_w}")

    try:
        previous = message_mean(q_xk)
        following = message_mean(q_xk1)

    except RuleError as error:
        raise RuleError(f"Missing state marginals for the control message: {error}") from error

    return Gaussian1D(following - previous - m_w, v_w)


def variational_mean_message(q_out: Message, fixed_variance: float) -> Gaussian1D:
    """Mean-field message toward the mean port of N(out | mean, v): N(E[out], v)."""
    if not fixed_variance > 0.0:
        raise RuleError(f"Gaussian node variance must be positive, got {fixed_variance}")

    return Gaussian1D(message_mean(q_out), fixed_variance)


def prior_message(node) -> Gaussian1D:
    """Constant message of a PriorNode or GoalPriorNode."""
    return node.gaussian

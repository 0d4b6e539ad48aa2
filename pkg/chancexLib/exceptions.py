"""Exception hierarchy shared by the chancex library and entry script."""


class ChancexError(Exception):
    """Base class for every error raised by chancexLib."""


class GaussianError(ChancexError, ValueError):
    """Invalid Gaussian parameters, or an improper density where a belief is required."""


class FlatTiltError(GaussianError):
    """Division left zero precision but a non-zero weighted mean (a pure exponential tilt)."""


class GraphError(ChancexError):
    """Model description is not a valid bipartite factor graph."""


class RuleError(ChancexError):
    """A message update rule was called outside its preconditions."""


class ScheduleError(ChancexError):
    """A schedule entry failed; the message names the entry position."""

    def __init__(self, message: str, position: int, label: str = "") -> None:
        super().__init__(message)
        self.position = position
        self.label = label


class ChanceConstraintError(ChancexError):
    """Chance-constraint correction failed. Carries the diagnostics gathered so far."""

    def __init__(self, message: str, diagnostics=None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics


class InferenceError(ChancexError):
    """Policy inference failed."""


class ConfigError(ChancexError):
    """Bad configuration file, flag value or parameter combination."""

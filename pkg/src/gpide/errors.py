"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class GPIDEError(Exception):
    """Base class for all package errors."""


class ConfigError(GPIDEError):
    """Invalid configuration. ``problems`` lists every violated constraint."""

    def __init__(self, problems: list[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class OrderViolation(ConfigError):
    pass


class AlphaOutOfRange(ConfigError):
    pass


class BetaOutOfRange(ConfigError):
    pass


class DeltaOutOfRange(GPIDEError, ValueError):
    pass


class InfeasibleCompletion(GPIDEError):
    """The interior density on (-1, 1) cannot be made a nonnegative density."""


class RadiusTooSmall(GPIDEError, ValueError):
    pass


class GridTooNarrow(GPIDEError):
    def __init__(self, bound: float, tolerance: float):
        self.bound = bound
        self.tolerance = tolerance
        super().__init__(
            f"boundary-influence bound {bound:.6g} exceeds tolerance {tolerance:.6g}"
        )


class DegenerateFit(GPIDEError):
    pass


class InvariantViolation(GPIDEError):
    pass

"""Monotone approximation scheme for nonlinear PIDEs driven by alpha-stable G-Levy processes."""

from .errors import (AlphaOutOfRange, BetaOutOfRange, ConfigError, DegenerateFit, DeltaOutOfRange,
                     GPIDEError, GridTooNarrow, InfeasibleCompletion, InvariantViolation,
                     OrderViolation, RadiusTooSmall)
from .uncertainty import StableParams, UncertaintyBox, WkLaw, build_wk_law, validate_box

__version__ = "0.1.0"

"""Exception taxonomy and process exit codes.

The CLI maps exception classes to exit codes; library code raises the most
specific class that applies.  Everything derives from :class:`WedgeError` so
callers can catch the whole family with one clause.
"""

from __future__ import annotations

# Exit codes used by the command-line entry point.
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VERIFY = 4


class WedgeError(Exception):
    """Base class for all package errors."""


class ConfigError(WedgeError):
    """Invalid parameters, grids, or configuration files (exit code 2)."""


class GridError(ConfigError):
    """A grid is malformed or too small for the requested stencil."""


class ParityError(ConfigError):
    """An operation was asked to do something its parity metadata forbids."""


class GapError(ConfigError):
    """Bootstrap exponent gap violated (sigma <= C_lin)."""


class NumericError(WedgeError):
    """Runtime numerical failure (exit code 3)."""


class NonFiniteError(NumericError):
    """NaN or Inf encountered in input or intermediate data."""


class BlowupError(NumericError):
    """Evaluation requested at or past the blow-up time."""


class CflError(NumericError):
    """Explicit time step exceeds the advective stability limit."""


class EllipticSolveError(NumericError):
    """Linear solve failed or its residual exceeded tolerance."""


class CeilingError(NumericError):
    """A simulated field exceeded the configured blow-up ceiling."""


class VerificationError(WedgeError):
    """An identity or acceptance check failed (exit code 4)."""


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, VerificationError):
        return EXIT_VERIFY
    return 1

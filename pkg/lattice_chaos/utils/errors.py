"""
Exception hierarchy for Lattice Chaos.

Every failure raised by the library derives from LatticeChaosError, so
callers can catch one type. The CLI maps the subclasses to exit codes:

- verdict failures (not exceptions) exit with 1
- configuration, parse, contract, domain, guard, hypothesis and fit
  errors exit with 2
- persistence and other I/O errors exit with 3
"""

from typing import Any, Optional, Sequence


class LatticeChaosError(Exception):
    """Base class for all library errors."""

    exit_code = 2


class ConfigurationError(LatticeChaosError):
    """Inconsistent martingale law, bad cutoff, or a missing or malformed config."""


class GraphParseError(ConfigurationError):
    """Syntax error in a graph fixture."""

    def __init__(self, message: str, line_number: Optional[int] = None,
                 source: Optional[str] = None):
        location = ""
        if source is not None:
            location = f"{source}:"
        if line_number is not None:
            location = f"{location}{line_number}: "
        elif location:
            location = f"{location} "
        super().__init__(f"{location}{message}")
        self.line_number = line_number
        self.source = source


class DomainError(LatticeChaosError, ValueError):
    """A time or a test-function support lies outside the simulated horizon."""


class GuardError(LatticeChaosError):
    """A combinatorial or quadrature budget would be exceeded."""


class ContractError(LatticeChaosError):
    """Arity mismatch, invalid labelling, or a contraction not covering the variables."""


class HypothesisError(LatticeChaosError):
    """A bound was requested outside the regime where it is meaningful."""


class FitError(LatticeChaosError):
    """Too few scaling-regime points to fit an exponent."""


class BudgetExceededError(LatticeChaosError):
    """Wall-clock budget exhausted; carries the records computed so far."""

    exit_code = 1

    def __init__(self, message: str, partial_records: Optional[Sequence[Any]] = None):
        super().__init__(message)
        self.partial_records = list(partial_records or [])


class PersistenceError(LatticeChaosError):
    """Reading or writing an artifact failed."""

    exit_code = 3

    def __init__(self, message: str, path: Optional[str] = None):
        if path is not None:
            message = f"{message} ({path})"
        super().__init__(message)
        self.path = path

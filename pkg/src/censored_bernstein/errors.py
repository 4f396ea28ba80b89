"""Exception hierarchy shared by every module.

The CLI maps :class:`ValidationError` and :class:`DomainError` to exit code 2
and every :class:`NumericalError` subclass to exit code 3.
"""

from __future__ import annotations


class CensoredBernsteinError(Exception):
    """Base class for all package errors."""


class DomainError(CensoredBernsteinError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(CensoredBernsteinError, ValueError):
    """A configuration or input failed validation before any computation."""


class NumericalError(CensoredBernsteinError, ArithmeticError):
    """A numerical procedure failed to meet its accuracy budget.

    ``diagnostics`` carries whatever the failing routine could observe
    (sampled sequences, contour parameters, error estimates).
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class HypothesisViolation(NumericalError):
    """A structural hypothesis (such as q < 1) does not hold."""


class NonConvergenceError(NumericalError):
    """A series or iteration exceeded its term cap without converging."""

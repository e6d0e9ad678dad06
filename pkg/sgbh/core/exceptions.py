"""
Custom exceptions for the SGBH toolkit.
Provides consistent error handling and CLI exit codes across the package.
"""
from typing import Optional, List

import numpy as np


class SGBHException(Exception):
    """Base exception for the SGBH toolkit"""
    exit_code: int = 1

    def __init__(self, message: str = "An error occurred"):
        self.message = message
        super().__init__(self.message)


class ValidationError(SGBHException):
    """Validation failed"""
    exit_code = 2

    def __init__(self, message: str = "Validation failed", field: Optional[str] = None):
        self.field = field
        if field:
            message = f"Validation failed for field '{field}': {message}"
        super().__init__(message)


class GridMismatchError(ValidationError):
    """Arrays defined on different grids"""
    def __init__(self, what: str = "Input", expected: tuple = None, got: tuple = None):
        message = f"{what} is not defined on the expected grid"
        if expected is not None and got is not None:
            message = f"{what} has shape {got}, expected {expected}"
        super().__init__(message)


class InsufficientSamplesError(ValidationError):
    """Not enough samples for an estimate"""
    def __init__(self, needed: int, got: int):
        super().__init__(f"need at least {needed} samples, got {got}", field="samples")


class NonFiniteError(SGBHException):
    """NaN or Inf encountered (numerical blow-up)"""
    exit_code = 3

    def __init__(self, where: str = "solution", time_index: Optional[int] = None):
        message = f"Non-finite values in {where}"
        if time_index is not None:
            message = f"{message} at time index {time_index}"
        self.time_index = time_index
        super().__init__(message)


class ConvergenceError(SGBHException):
    """Fixed-point iteration hit its cap"""
    exit_code = 3

    def __init__(self, iterations: int, residuals: Optional[List[float]] = None):
        self.iterations = iterations
        self.residuals = residuals or []
        last = f"{self.residuals[-1]:.3e}" if self.residuals else "n/a"
        super().__init__(f"Picard iteration did not converge in {iterations} sweeps (last residual {last})")


class LocalizationError(SGBHException):
    """Base path left the truncation ball"""
    exit_code = 3

    def __init__(self, level: float, norm: float, time_index: int):
        self.level = level
        self.norm = norm
        self.time_index = time_index
        super().__init__(
            f"Base path L^p norm {norm:.4g} reaches truncation level {level} at time index {time_index}"
        )


class CheckFailedError(SGBHException):
    """An acceptance check did not pass"""
    exit_code = 1

    def __init__(self, check: str, detail: Optional[str] = None):
        message = f"Check '{check}' failed"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


def ensure_finite(values, where: str = "solution"):
    """Raise NonFiniteError at the first time row holding NaN/Inf."""
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.argmax(bad.reshape(bad.shape[0], -1).any(axis=1))) if bad.ndim > 1 else None
        raise NonFiniteError(where, row)


def raise_validation_error(message: str = "Validation failed", field: Optional[str] = None):
    """Raise ValidationError (exit 2)"""
    raise ValidationError(message, field)


def raise_grid_mismatch(what: str = "Input", expected: tuple = None, got: tuple = None):
    """Raise GridMismatchError (exit 2)"""
    raise GridMismatchError(what, expected, got)

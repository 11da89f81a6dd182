"""
Custom exception hierarchy for the smoke-removal policy optimization toolkit.

This module defines the exceptions raised by the numerical core, the reward
evaluators and the command-line layer, together with helpers that turn them
into structured log records and process exit codes.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np

# CLI exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_PREREQUISITE = 3
EXIT_NUMERIC = 4


class SmokeRpoError(Exception):
    """
    Base exception for all toolkit errors.

    This is the root of the exception hierarchy and should be caught
    for general error handling.
    """

    exit_code = EXIT_FAILURE

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        """
        Initialize toolkit error.

        Args:
            message: Human-readable error message
            details: Additional error details for debugging
        """
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def __str__(self) -> str:
        """Return formatted error message."""
        if self.details:
            detail_str = ", ".join(f"{k}={v}" for k, v in self.details.items())
            return f"{self.message} (Details: {detail_str})"
        return self.message


class ConfigurationError(SmokeRpoError):
    """
    Raised when configuration is invalid or cannot be loaded.

    This includes YAML parsing errors, validation failures, unknown keys
    and missing configuration files.
    """

    exit_code = EXIT_CONFIG


class DimensionError(SmokeRpoError):
    """Raised when image or vector shapes are invalid or do not match."""

    def __init__(
        self,
        message: str,
        expected: Any | None = None,
        actual: Any | None = None,
        **kwargs,
    ):
        super().__init__(message, kwargs)
        if expected is not None:
            self.details["expected"] = expected
        if actual is not None:
            self.details["actual"] = actual


class DomainError(SmokeRpoError):
    """
    Raised when an argument lies outside the domain of an operation.

    Examples are empty samples, out-of-range time steps or group sizes
    below two.
    """

    def __init__(self, message: str, field: str | None = None, value: Any = None):
        details: dict[str, Any] = {}
        if field:
            details["field"] = field
        if value is not None:
            details["value"] = str(value)
        super().__init__(message, details)
        self.field = field
        self.value = value


class NumericError(SmokeRpoError):
    """Raised when a computation produces non-finite values."""

    exit_code = EXIT_NUMERIC

    def __init__(self, message: str, quantity: str | None = None, **kwargs):
        super().__init__(message, kwargs)
        self.quantity = quantity
        if quantity:
            self.details["quantity"] = quantity


class PrerequisiteError(SmokeRpoError):
    """Raised when a command needs an artifact that has not been produced yet."""

    exit_code = EXIT_PREREQUISITE

    def __init__(self, message: str, missing: str | None = None, **kwargs):
        super().__init__(message, kwargs)
        self.missing = missing
        if missing:
            self.details["missing"] = missing


class ScorerError(SmokeRpoError):
    """Raised when a quality scorer fails; carries the scorer id."""

    def __init__(self, message: str, scorer_id: str, **kwargs):
        super().__init__(message, kwargs)
        self.scorer_id = scorer_id
        self.details["scorer_id"] = scorer_id


class CheckpointError(SmokeRpoError):
    """Raised for unreadable, corrupted or incompatible model checkpoints."""

    def __init__(self, message: str, path: str | None = None, **kwargs):
        super().__init__(message, kwargs)
        self.path = path
        if path:
            self.details["path"] = path


class CorpusError(SmokeRpoError):
    """Raised when a corpus directory or manifest is malformed."""

    def __init__(self, message: str, path: str | None = None, **kwargs):
        super().__init__(message, kwargs)
        self.path = path
        if path:
            self.details["path"] = path


# Exception handling utilities


def require_finite(value: Any, quantity: str) -> None:
    """Raise NumericError if ``value`` (scalar or array) has non-finite entries."""
    if isinstance(value, float | int):
        if not math.isfinite(value):
            raise NumericError(f"Non-finite {quantity}", quantity=quantity)
        return
    if not np.all(np.isfinite(value)):
        raise NumericError(f"Non-finite {quantity}", quantity=quantity)


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(error, SmokeRpoError):
        return error.exit_code
    return EXIT_FAILURE


def handle_smoke_rpo_error(error: SmokeRpoError, logger=None) -> dict[str, Any]:
    """
    Handle a toolkit error and return structured error information.

    Args:
        error: The error to handle
        logger: Optional logger for error reporting

    Returns:
        Dictionary with error information
    """
    error_info = {
        "type": error.__class__.__name__,
        "message": error.message,
        "details": error.details,
        "exit_code": error.exit_code,
    }

    if logger:
        logger.error(
            f"{error_info['type']}: {error}",
            extra={"error_details": error_info["details"]},
        )

    return error_info

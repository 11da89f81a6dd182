"""
Custom exceptions for the smoke-removal policy optimization toolkit.

This module provides a hierarchy of custom exceptions for consistent error
handling and CLI exit codes throughout the package.
"""

from .smoke_rpo_exceptions import (
    CheckpointError,
    ConfigurationError,
    CorpusError,
    DimensionError,
    DomainError,
    NumericError,
    PrerequisiteError,
    ScorerError,
    SmokeRpoError,
    exit_code_for,
    handle_smoke_rpo_error,
    require_finite,
)

__all__ = [
    "CheckpointError",
    "ConfigurationError",
    "CorpusError",
    "DimensionError",
    "DomainError",
    "NumericError",
    "PrerequisiteError",
    "ScorerError",
    "SmokeRpoError",
    "exit_code_for",
    "handle_smoke_rpo_error",
    "require_finite",
]

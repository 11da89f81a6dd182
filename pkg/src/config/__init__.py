"""
Configuration management for the smoke-removal policy optimization toolkit.

This module provides configuration management with validation,
type checking, and environment variable support.
"""

from .config_manager import EFFECTIVE_CONFIG_NAME, ConfigManager
from .config_models import (
    AffineNormalization,
    ConceptsConfig,
    DenoiserConfig,
    DiffusionConfig,
    LoggingConfig,
    OptimizerType,
    PathsConfig,
    PretrainConfig,
    PriorsConfig,
    ProviderType,
    QualityConfig,
    RatioMode,
    RestoreConfig,
    RewardWeights,
    RpoConfig,
    RunConfig,
    SmokeConfig,
    SynthConfig,
)

__all__ = [
    "EFFECTIVE_CONFIG_NAME",
    "AffineNormalization",
    "ConceptsConfig",
    "ConfigManager",
    "DenoiserConfig",
    "DiffusionConfig",
    "LoggingConfig",
    "OptimizerType",
    "PathsConfig",
    "PretrainConfig",
    "PriorsConfig",
    "ProviderType",
    "QualityConfig",
    "RatioMode",
    "RestoreConfig",
    "RewardWeights",
    "RpoConfig",
    "RunConfig",
    "SmokeConfig",
    "SynthConfig",
]

"""
Configuration manager for loading, validating, and managing run configuration.

This module provides a centralized way to handle configuration from multiple sources
including files, environment variables, and command-line arguments.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any

from pydantic import ValidationError
import yaml

from ..exceptions import ConfigurationError
from .config_models import RunConfig

ENV_PREFIX = "SMOKE_RPO_"
EFFECTIVE_CONFIG_NAME = "effective_config.yaml"

logger = logging.getLogger(__name__)


class ConfigManager:
    """Manages run configuration from multiple sources."""

    def __init__(self, environ: dict[str, str] | None = None) -> None:
        """
        Initialize the configuration manager.

        Args:
            environ: Environment mapping used for overrides (default: os.environ)
        """
        self._environ = os.environ if environ is None else environ

    def load(
        self, config_file: str | Path | None = None, overrides: dict[str, Any] | None = None
    ) -> RunConfig:
        """
        Load configuration from an optional YAML file, environment and overrides.

        Precedence, lowest first: defaults, file, environment, ``overrides``.

        Raises:
            ConfigurationError: If the file cannot be loaded or validation fails
        """
        config_data = self._read_file(config_file) if config_file else {}
        config_data = self._apply_env_overrides(config_data)
        if overrides:
            self._deep_update(config_data, overrides)
        return self._validate(config_data)

    @staticmethod
    def write_effective_config(config: RunConfig, out_dir: str | Path) -> Path:
        """Write ``config`` as ``effective_config.yaml`` next to a command's outputs."""
        path = config.save_to_file(Path(out_dir) / EFFECTIVE_CONFIG_NAME)
        logger.debug(f"Effective configuration written to {path}")
        return path

    @staticmethod
    def seed_overrides(seed: int) -> dict[str, Any]:
        """Overrides that set every seed field to ``seed``."""
        return {
            "seed": seed,
            "synth": {"smoke": {"seed": seed}},
            "denoiser": {"seed": seed},
            "pretrain": {"seed": seed},
            "concepts": {"seed": seed},
            "rpo": {"seed": seed},
            "restore": {"seed": seed},
        }

    def _read_file(self, config_file: str | Path) -> dict[str, Any]:
        config_path = Path(config_file)
        if not config_path.exists():
            raise ConfigurationError(f"Configuration file not found: {config_path}")
        try:
            with open(config_path, encoding="utf-8") as f:
                config_data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML in {config_path}: {e}") from e
        if config_data is None:
            return {}
        if not isinstance(config_data, dict):
            raise ConfigurationError(f"Top level of {config_path} must be a mapping")
        return config_data

    def _validate(self, config_data: dict[str, Any]) -> RunConfig:
        try:
            return RunConfig(**config_data)
        except ValidationError as e:
            raise ConfigurationError(f"Configuration validation failed: {e}") from e

    def _apply_env_overrides(self, config_data: dict[str, Any]) -> dict[str, Any]:
        """
        Apply environment variable overrides to configuration.

        Environment variables should be prefixed with SMOKE_RPO_ and use
        double underscores to separate nested keys.

        Examples:
            SMOKE_RPO_RPO__ITERATIONS=50
            SMOKE_RPO_DIFFUSION__T=10
            SMOKE_RPO_LOGGING__LEVEL=DEBUG
        """
        for key, value in self._environ.items():
            if not key.startswith(ENV_PREFIX):
                continue

            config_key = key[len(ENV_PREFIX) :]
            key_parts = [part.lower() for part in config_key.split("__")]
            # Schedule length and group size keep their upper-case field names
            key_parts = [part.upper() if part in ("t", "g") else part for part in key_parts]

            self._set_nested_value(config_data, key_parts, self._convert_env_value(value))

        return config_data

    def _convert_env_value(self, value: str) -> Any:
        """Convert environment variable string to appropriate type."""
        if value.lower() in ("true", "yes", "on"):
            return True
        if value.lower() in ("false", "no", "off"):
            return False

        try:
            if "." in value or "e" in value.lower():
                return float(value)
            return int(value)
        except ValueError:
            pass

        return value

    def _set_nested_value(self, data: dict[str, Any], key_parts: list[str], value: Any) -> None:
        """Set a nested dictionary value using a list of keys."""
        current = data

        for key_part in key_parts[:-1]:
            if key_part not in current or not isinstance(current[key_part], dict):
                current[key_part] = {}
            current = current[key_part]

        current[key_parts[-1]] = value

    def _deep_update(self, base_dict: dict[str, Any], update_dict: dict[str, Any]) -> None:
        """Recursively update a dictionary."""
        for key, value in update_dict.items():
            if key in base_dict and isinstance(base_dict[key], dict) and isinstance(value, dict):
                self._deep_update(base_dict[key], value)
            else:
                base_dict[key] = value


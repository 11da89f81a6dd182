#!/usr/bin/env python3
"""
Test suite for configuration models, the configuration manager and the
exception hierarchy.
"""

import logging
from pathlib import Path

from pydantic import ValidationError
import pytest
import yaml

from src.config import EFFECTIVE_CONFIG_NAME, ConfigManager, RunConfig
from src.config.config_models import DiffusionConfig, RatioMode
from src.exceptions import (
    CheckpointError,
    ConfigurationError,
    DimensionError,
    NumericError,
    PrerequisiteError,
    ScorerError,
    exit_code_for,
    handle_smoke_rpo_error,
    require_finite,
)

# ============================== Fixtures ====================================


@pytest.fixture
def manager() -> ConfigManager:
    """Manager isolated from the process environment."""
    return ConfigManager(environ={})


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    path = tmp_path / "config.yaml"
    path.write_text(
        yaml.safe_dump({"seed": 3, "diffusion": {"T": 12}, "rpo": {"G": 6, "ratio_mode": "per_step"}}),
        encoding="utf-8",
    )
    return path


# ============================== Models ======================================


class TestConfigModels:
    """Schema validation."""

    def test_defaults_are_valid(self) -> None:
        config = RunConfig()
        assert config.rpo.G == 4
        assert config.rpo.ratio_mode == RatioMode.TRAJECTORY
        assert config.rpo.weights.is_default()

    def test_unknown_key_rejected(self) -> None:
        with pytest.raises(ValidationError):
            RunConfig(rpo={"groups": 4})

    def test_beta_bounds(self) -> None:
        with pytest.raises(ValidationError):
            DiffusionConfig(beta_min=0.2, beta_max=0.1)

    def test_concept_dim_must_match_embeddings(self) -> None:
        with pytest.raises(ValidationError):
            RunConfig(denoiser={"concept_dim": 16}, concepts={"embed_dim": 32})
        assert RunConfig(denoiser={"concept_dim": 0}, concepts={"embed_dim": 32}).denoiser.concept_dim == 0

    def test_group_size_floor(self) -> None:
        with pytest.raises(ValidationError):
            RunConfig(rpo={"G": 1})

    def test_precomputed_provider_needs_table(self) -> None:
        with pytest.raises(ValidationError):
            RunConfig(concepts={"provider": "precomputed"})

    def test_unknown_scorer(self) -> None:
        with pytest.raises(ValidationError):
            RunConfig(quality={"scorers": ["brisque"]})

    def test_config_hash(self) -> None:
        assert RunConfig().config_hash() == RunConfig().config_hash()
        assert RunConfig(seed=1).config_hash() != RunConfig().config_hash()

    def test_master_seed_fills_unset_sections(self) -> None:
        config = RunConfig(seed=7, rpo={"seed": 1}, synth={"smoke": {"density": 2.0}})
        assert config.rpo.seed == 1
        assert config.synth.smoke.seed == 7
        assert {config.denoiser.seed, config.pretrain.seed, config.concepts.seed, config.restore.seed} == {7}
        assert RunConfig(**config.to_plain_dict()).config_hash() == config.config_hash()

    def test_refinement_defaults(self) -> None:
        rpo = RunConfig().rpo
        assert rpo.lambda_kl == 0.01 and rpo.batch_groups == 2
        assert rpo.record_wall_time is False

    def test_resolve_paths(self, tmp_path: Path) -> None:
        config = RunConfig(paths={"out_dir": str(tmp_path), "priors": "/abs/priors.json"})
        assert config.paths.resolve("corpus_dir") == tmp_path / "corpus"
        assert config.paths.resolve("priors") == Path("/abs/priors.json")


# ============================== Manager =====================================


class TestConfigManager:
    """Loading with file, environment and override precedence."""

    def test_load_file(self, manager: ConfigManager, config_file: Path) -> None:
        config = manager.load(config_file)
        assert config.seed == 3
        assert config.rpo.seed == 3 and config.synth.smoke.seed == 3
        assert config.diffusion.T == 12
        assert config.rpo.ratio_mode == RatioMode.PER_STEP

    def test_missing_file(self, manager: ConfigManager, tmp_path: Path) -> None:
        with pytest.raises(ConfigurationError):
            manager.load(tmp_path / "absent.yaml")

    def test_invalid_yaml(self, manager: ConfigManager, tmp_path: Path) -> None:
        path = tmp_path / "bad.yaml"
        path.write_text("rpo: [unclosed", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            manager.load(path)

    def test_validation_error_wrapped(self, manager: ConfigManager) -> None:
        with pytest.raises(ConfigurationError):
            manager.load(None, {"rpo": {"clip_eps": 2.0}})

    def test_environment_overrides(self, config_file: Path) -> None:
        env = {
            "SMOKE_RPO_RPO__ITERATIONS": "7",
            "SMOKE_RPO_RPO__G": "8",
            "SMOKE_RPO_DIFFUSION__T": "20",
            "SMOKE_RPO_RPO__LAMBDA_KL": "0.5",
            "SMOKE_RPO_RESTORE__DETERMINISTIC": "true",
            "SMOKE_RPO_LOGGING__LEVEL": "DEBUG",
            "UNRELATED": "1",
        }
        config = ConfigManager(environ=env).load(config_file)
        assert config.rpo.iterations == 7
        assert config.rpo.G == 8
        assert config.diffusion.T == 20
        assert config.rpo.lambda_kl == 0.5
        assert config.restore.deterministic is True
        assert config.logging.level.value == "DEBUG"

    def test_overrides_beat_environment(self, config_file: Path) -> None:
        manager = ConfigManager(environ={"SMOKE_RPO_SEED": "5"})
        assert manager.load(config_file).seed == 5
        assert manager.load(config_file, {"seed": 9}).seed == 9

    def test_seed_overrides(self, manager: ConfigManager) -> None:
        config = manager.load(None, ConfigManager.seed_overrides(4))
        seeds = {
            config.seed,
            config.synth.smoke.seed,
            config.denoiser.seed,
            config.pretrain.seed,
            config.concepts.seed,
            config.rpo.seed,
            config.restore.seed,
        }
        assert seeds == {4}

    def test_effective_config_round_trip(self, manager: ConfigManager, config_file: Path, tmp_path: Path) -> None:
        config = manager.load(config_file)
        path = ConfigManager.write_effective_config(config, tmp_path / "out")
        assert path.name == EFFECTIVE_CONFIG_NAME
        assert path.read_text(encoding="utf-8").startswith(f"# config_hash: {config.config_hash()}")
        assert ConfigManager(environ={}).load(path).config_hash() == config.config_hash()

    def test_shipped_config(self, manager: ConfigManager) -> None:
        shipped = Path(__file__).resolve().parent.parent / "config.yaml"
        config = manager.load(shipped)
        assert config.denoiser.concept_dim == config.concepts.embed_dim
        reseeded = ConfigManager(environ={"SMOKE_RPO_SEED": "3"}).load(shipped)
        assert {reseeded.synth.smoke.seed, reseeded.pretrain.seed, reseeded.rpo.seed, reseeded.restore.seed} == {3}


# ============================== Exceptions ==================================


class TestExceptions:
    """Exit codes and structured error records."""

    def test_exit_codes(self) -> None:
        assert exit_code_for(ConfigurationError("bad")) == 2
        assert exit_code_for(PrerequisiteError("missing", missing="priors.json")) == 3
        assert exit_code_for(NumericError("nan", quantity="rho")) == 4
        assert exit_code_for(CheckpointError("corrupt")) == 1
        assert exit_code_for(ValueError("other")) == 1

    def test_details_in_message(self) -> None:
        err = DimensionError("Size mismatch", expected=(4, 4), actual=(2, 2))
        assert str(err) == "Size mismatch (Details: expected=(4, 4), actual=(2, 2))"

    def test_scorer_error_carries_id(self) -> None:
        assert ScorerError("failed", scorer_id="liqe").details["scorer_id"] == "liqe"

    def test_handle_error(self, caplog: pytest.LogCaptureFixture) -> None:
        logger = logging.getLogger("test_handle_error")
        with caplog.at_level(logging.ERROR):
            info = handle_smoke_rpo_error(PrerequisiteError("Run priors first", missing="priors.json"), logger)
        assert info["type"] == "PrerequisiteError"
        assert info["exit_code"] == 3
        assert info["details"] == {"missing": "priors.json"}
        assert "Run priors first" in caplog.text

    def test_require_finite(self) -> None:
        require_finite(1.0, "x")
        with pytest.raises(NumericError):
            require_finite(float("nan"), "x")
        with pytest.raises(NumericError):
            require_finite([1.0, float("inf")], "x")

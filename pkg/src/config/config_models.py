"""
Pydantic models for configuration validation and type checking.

This module defines the run configuration schema with validation rules and
desk-scale default values. Every model rejects unknown keys so that a typo
in a YAML document fails before any work starts.
"""

from __future__ import annotations

from enum import Enum
import hashlib
import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
import yaml


class LogLevel(str, Enum):
    """Supported logging levels."""

    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class OptimizerType(str, Enum):
    """Parameter update rules."""

    SGD = "sgd"
    ADAMW = "adamw"


class RatioMode(str, Enum):
    """How the importance ratio enters the clipped surrogate."""

    TRAJECTORY = "trajectory"
    PER_STEP = "per_step"


class ProviderType(str, Enum):
    """Embedding provider implementations."""

    HISTOGRAM = "histogram"
    PRECOMPUTED = "precomputed"


class StrictModel(BaseModel):
    """Base model that rejects unknown keys."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SmokeConfig(StrictModel):
    """Scattering-model smoke parameters."""

    airlight: tuple[float, float, float] = Field(
        default=(0.92, 0.92, 0.90), description="Smoke colour A (RGB in [0,1])"
    )
    density: float = Field(default=1.0, ge=0.0, description="Optical density scale")
    smoothness: float = Field(
        default=8.0, ge=1.0, description="Correlation length of the transmission field (pixels)"
    )
    seed: int = Field(default=0, ge=0, description="RNG seed")
    n_modes: int = Field(default=4, ge=1, le=32, description="Cosine modes in the density field")
    density_jitter: float = Field(
        default=0.0, ge=0.0, le=1.0, description="Relative per-sample density jitter"
    )
    airlight_jitter: float = Field(
        default=0.0, ge=0.0, le=0.5, description="Per-sample airlight jitter"
    )

    @field_validator("airlight")
    @classmethod
    def validate_airlight(cls, v: tuple[float, float, float]) -> tuple[float, float, float]:
        """Airlight components must lie in [0, 1]."""
        if any(not 0.0 <= a <= 1.0 for a in v):
            raise ValueError("Airlight components must lie in [0, 1]")
        return v


class SynthConfig(StrictModel):
    """Corpus synthesis configuration."""

    smoke: SmokeConfig = Field(default_factory=SmokeConfig)
    n: int = Field(default=200, ge=1, le=100000, description="Number of pairs")
    height: int = Field(default=16, ge=2, le=512)
    width: int = Field(default=16, ge=2, le=512)
    train_ratio: float = Field(default=0.8, gt=0.0, le=1.0)
    workers: int = Field(default=1, ge=1, le=64, description="Parallel sample builders")


class DiffusionConfig(StrictModel):
    """Noise schedule configuration."""

    T: int = Field(default=100, ge=1, le=2000, description="Diffusion steps")
    beta_min: float = Field(default=1e-4, gt=0.0, lt=1.0)
    beta_max: float = Field(default=0.02, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def validate_bounds(self) -> DiffusionConfig:
        """beta_min must not exceed beta_max."""
        if self.beta_min > self.beta_max:
            raise ValueError("beta_min must not exceed beta_max")
        return self


class DenoiserConfig(StrictModel):
    """Two-layer denoiser architecture."""

    hidden: int = Field(default=32, ge=1, le=4096)
    time_embed_dim: int = Field(default=16, ge=2, le=256)
    concept_dim: int = Field(default=64, ge=0, le=4096, description="0 disables concept input")
    init_scale: float = Field(default=0.01, ge=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)

    @field_validator("time_embed_dim")
    @classmethod
    def validate_even(cls, v: int) -> int:
        """Sinusoidal embeddings pair sines with cosines."""
        if v % 2:
            raise ValueError("time_embed_dim must be even")
        return v


class PretrainConfig(StrictModel):
    """Supervised cold-start configuration."""

    steps: int = Field(default=500, ge=0)
    lr: float = Field(default=1e-3, gt=0.0)
    optimizer: OptimizerType = Field(default=OptimizerType.ADAMW)
    weight_decay: float = Field(default=0.0, ge=0.0)
    seed: int = Field(default=0, ge=0)
    log_every: int = Field(default=50, ge=1)


class ConceptsConfig(StrictModel):
    """Concept-pair training configuration."""

    provider: ProviderType = Field(default=ProviderType.HISTOGRAM)
    embeddings_path: str | None = Field(
        default=None, description="JSON {path: vector} for the precomputed provider"
    )
    embed_dim: int = Field(default=64, ge=2, le=4096)
    hist_bins: int = Field(default=32, ge=2, le=256)
    orient_bins: int = Field(default=8, ge=2, le=64)
    tau: float = Field(default=0.07, gt=0.0, description="Softmax temperature (not a published value)")
    steps: int = Field(default=200, ge=0)
    lr: float = Field(default=0.1, gt=0.0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def validate_provider(self) -> ConceptsConfig:
        """The precomputed provider needs its embedding table."""
        if self.provider == ProviderType.PRECOMPUTED and not self.embeddings_path:
            raise ValueError("precomputed provider requires embeddings_path")
        return self


class PriorsConfig(StrictModel):
    """Inter-channel prior estimation."""

    percentile: float = Field(default=95.0, ge=0.0, le=100.0)


class AffineNormalization(StrictModel):
    """score' = scale * score + offset."""

    scale: float = 1.0
    offset: float = 0.0


class QualityConfig(StrictModel):
    """Reference-free quality scorers."""

    scorers: list[str] = Field(default_factory=lambda: ["ceiq_proxy"])
    liqe_enabled: bool = Field(default=False, description="LIQE slot (needs external scores)")
    external_scores_csv: str | None = Field(default=None, description="Sidecar path,score CSV")
    normalization: dict[str, AffineNormalization] = Field(default_factory=dict)

    @field_validator("scorers")
    @classmethod
    def validate_scorers(cls, v: list[str]) -> list[str]:
        """Only known scorer ids are accepted."""
        known = {"ceiq_proxy", "external", "liqe"}
        unknown = [s for s in v if s not in known]
        if unknown:
            raise ValueError(f"Unknown scorers: {unknown}")
        return v


class RewardWeights(StrictModel):
    """Per-term weights of the composite reward."""

    pg: float = Field(default=1.0, ge=0.0)
    rf: float = Field(default=1.0, ge=0.0)
    vc: float = Field(default=1.0, ge=0.0)

    def is_default(self) -> bool:
        return self.pg == 1.0 and self.rf == 1.0 and self.vc == 1.0


class RpoConfig(StrictModel):
    """Group-relative policy optimization."""

    G: int = Field(default=4, ge=2, le=256, description="Group size")
    clip_eps: float = Field(default=0.2, gt=0.0, lt=1.0)
    lambda_kl: float = Field(default=0.01, ge=0.0, description="KL anchor weight (not a published value)")
    lr: float = Field(default=5e-5, gt=0.0)
    optimizer: OptimizerType = Field(default=OptimizerType.ADAMW)
    weight_decay: float = Field(default=0.0, ge=0.0)
    iterations: int = Field(default=200, ge=0)
    seed: int = Field(default=0, ge=0)
    weights: RewardWeights = Field(default_factory=RewardWeights)
    advantage_eps: float = Field(default=1e-8, gt=0.0)
    inner_epochs: int = Field(default=1, ge=1, le=64)
    batch_groups: int = Field(default=2, ge=1, le=256, description="Groups per iteration")
    ratio_mode: RatioMode = Field(default=RatioMode.TRAJECTORY)
    step_stride: int = Field(default=1, ge=1, description="Evaluate every k-th reverse step")
    record_wall_time: bool = Field(default=False, description="Wall time makes metric rows differ between reruns")
    log_every: int = Field(default=10, ge=1)


class RestoreConfig(StrictModel):
    """Inference configuration."""

    deterministic: bool = Field(default=False, description="Zero all injected noise")
    seed: int = Field(default=0, ge=0)


class PathsConfig(StrictModel):
    """Artifact locations; relative paths resolve against ``out_dir``."""

    out_dir: str = Field(default="runs/desk")
    corpus_dir: str = Field(default="corpus")
    unpaired_dir: str | None = Field(
        default=None, description="Directory of smoky PPMs for refinement (default: corpus train split)"
    )
    pretrain_checkpoint: str = Field(default="pretrain.ckpt")
    rpo_checkpoint: str = Field(default="rpo.ckpt")
    priors: str = Field(default="priors.json")
    concepts: str = Field(default="concepts.json")

    def resolve(self, name: str) -> Path:
        """Resolve a path field against ``out_dir``."""
        value = getattr(self, name)
        if value is None:
            raise ValueError(f"Path {name} is not set")
        p = Path(value)
        return p if p.is_absolute() else Path(self.out_dir) / p


class LoggingConfig(StrictModel):
    """Logging configuration."""

    level: LogLevel = Field(default=LogLevel.INFO)
    log_file: str | None = Field(default=None, description="Log file path (None for console only)")


class RunConfig(StrictModel):
    """Complete run configuration."""

    seed: int = Field(default=0, ge=0, description="Master seed")
    paths: PathsConfig = Field(default_factory=PathsConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    diffusion: DiffusionConfig = Field(default_factory=DiffusionConfig)
    denoiser: DenoiserConfig = Field(default_factory=DenoiserConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    concepts: ConceptsConfig = Field(default_factory=ConceptsConfig)
    priors: PriorsConfig = Field(default_factory=PriorsConfig)
    quality: QualityConfig = Field(default_factory=QualityConfig)
    rpo: RpoConfig = Field(default_factory=RpoConfig)
    restore: RestoreConfig = Field(default_factory=RestoreConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @model_validator(mode="after")
    def validate_config_consistency(self) -> RunConfig:
        """Cross-section consistency checks."""
        if self.denoiser.concept_dim not in (0, self.concepts.embed_dim):
            raise ValueError("denoiser.concept_dim must be 0 or equal concepts.embed_dim")
        return self

    @model_validator(mode="after")
    def inherit_master_seed(self) -> RunConfig:
        """Section seeds that are not set explicitly follow ``seed``."""
        for section in (self.synth.smoke, self.denoiser, self.pretrain, self.concepts, self.rpo, self.restore):
            if "seed" not in section.model_fields_set:
                section.seed = self.seed
        return self

    def to_plain_dict(self) -> dict[str, Any]:
        """JSON-compatible dict with enums converted to their values."""
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        """Short SHA-256 of the canonical JSON dump."""
        canonical = json.dumps(self.to_plain_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def model_dump_yaml(self) -> str:
        """Export configuration as YAML string."""
        return yaml.safe_dump(self.to_plain_dict(), default_flow_style=False, sort_keys=False)

    def save_to_file(self, file_path: str | Path) -> Path:
        """Save configuration to YAML file."""
        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"# config_hash: {self.config_hash()}\n")
            f.write(self.model_dump_yaml())
        return path

"""
Pytest configuration for the Smoke-RPO test suite.

Puts the repository root on ``sys.path`` so that ``main`` and the ``src``
package import the same way under pytest as from the command line, and
provides small shared fixtures: 4x4 patches, a ten-step schedule and a
narrow denoiser keep every numerical test fast.
"""

from __future__ import annotations

from pathlib import Path
import sys
from typing import Any

import numpy as np
import pytest

_ROOT_DIR = str(Path(__file__).resolve().parent.parent)
if _ROOT_DIR not in sys.path:
    sys.path.insert(0, _ROOT_DIR)

from src.config.config_models import DenoiserConfig, RunConfig, SmokeConfig  # noqa: E402
from src.diffusion.denoiser import DenoiserModel  # noqa: E402
from src.diffusion.schedule import NoiseSchedule, make_schedule  # noqa: E402
from src.imaging.image_core import ImageTensor  # noqa: E402
from src.synthesis.smoke_synth import PairedSample, gen_corpus  # noqa: E402

PATCH = 4
STATE_DIM = PATCH * PATCH * 3

# ============================== Fixtures ====================================


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for test data."""
    return np.random.default_rng(1234)


@pytest.fixture
def random_image(rng: np.random.Generator) -> ImageTensor:
    """Uniform random 4x4 patch."""
    return ImageTensor(rng.uniform(0.0, 1.0, size=(PATCH, PATCH, 3)))


@pytest.fixture
def smoke_config() -> SmokeConfig:
    return SmokeConfig(seed=7)


@pytest.fixture
def pairs(smoke_config: SmokeConfig) -> list[PairedSample]:
    """Six synthetic 4x4 smoky/clean pairs."""
    return gen_corpus(smoke_config, 6, PATCH, PATCH)


@pytest.fixture
def schedule() -> NoiseSchedule:
    """Ten-step schedule with noticeable noise at every step."""
    return make_schedule(10, 1e-3, 0.2)


@pytest.fixture
def denoiser_config() -> DenoiserConfig:
    return DenoiserConfig(hidden=6, time_embed_dim=4, concept_dim=0, init_scale=0.1, seed=3)


@pytest.fixture
def model(denoiser_config: DenoiserConfig, schedule: NoiseSchedule) -> DenoiserModel:
    """Small denoiser over 4x4 states."""
    return DenoiserModel(denoiser_config, STATE_DIM, schedule.T)


def tiny_config_dict(out_dir: Path) -> dict[str, Any]:
    """Complete run configuration sized for seconds-long end-to-end runs."""
    return {
        "seed": 0,
        "paths": {"out_dir": str(out_dir)},
        "synth": {"n": 6, "height": PATCH, "width": PATCH, "train_ratio": 0.5},
        "diffusion": {"T": 4, "beta_min": 0.01, "beta_max": 0.2},
        "denoiser": {"hidden": 4, "time_embed_dim": 4, "concept_dim": 8, "init_scale": 0.05},
        "pretrain": {"steps": 8, "lr": 0.01, "log_every": 4},
        "concepts": {"embed_dim": 8, "hist_bins": 8, "orient_bins": 4, "steps": 20, "lr": 0.3},
        "rpo": {
            "G": 2,
            "iterations": 3,
            "lr": 0.001,
            "log_every": 1,
        },
        "logging": {"level": "WARNING"},
    }


@pytest.fixture
def tiny_config(tmp_path: Path) -> RunConfig:
    """Validated tiny configuration writing under ``tmp_path/run``."""
    return RunConfig(**tiny_config_dict(tmp_path / "run"))

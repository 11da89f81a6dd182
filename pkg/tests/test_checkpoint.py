#!/usr/bin/env python3
"""
Test suite for versioned binary checkpoints.
"""

import hashlib
from pathlib import Path
import struct

import numpy as np
import pytest

from src.diffusion.checkpoint import MAGIC, load_checkpoint, load_model, save_checkpoint
from src.diffusion.denoiser import DenoiserModel
from src.diffusion.sampler import restore
from src.diffusion.schedule import NoiseSchedule
from src.exceptions import CheckpointError
from src.imaging.image_core import ImageTensor

# ============================== Fixtures ====================================


@pytest.fixture
def saved(tmp_path: Path, model: DenoiserModel, schedule: NoiseSchedule) -> Path:
    """Checkpoint of the shared model with some metadata."""
    return save_checkpoint(
        tmp_path / "model.ckpt", model, schedule, config_hash="cafe", metadata={"stage": "pretrain", "steps_done": 3}
    )


# ============================== Round trip ==================================


class TestCheckpointRoundTrip:
    """Save and reload."""

    def test_parameters_bit_exact(self, saved: Path, model: DenoiserModel) -> None:
        ckpt = load_checkpoint(saved)
        assert np.array_equal(ckpt.theta, model.params.theta)
        assert ckpt.metadata == {"stage": "pretrain", "steps_done": 3}
        assert ckpt.config["config_hash"] == "cafe"
        assert ckpt.config["state_dim"] == 48

    def test_rebuilt_model_restores_identically(
        self, saved: Path, model: DenoiserModel, schedule: NoiseSchedule, random_image: ImageTensor
    ) -> None:
        loaded, sched, _ = load_model(saved)
        assert sched.T == schedule.T
        assert np.array_equal(sched.betas, schedule.betas)
        a = restore(model, schedule, random_image)
        b = restore(loaded, sched, random_image)
        assert np.array_equal(a.data, b.data)

    def test_starts_with_magic(self, saved: Path) -> None:
        assert saved.read_bytes()[: len(MAGIC)] == MAGIC


# ============================== Corruption ==================================


class TestCheckpointErrors:
    """Every malformed file is rejected with CheckpointError."""

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_bad_magic(self, saved: Path) -> None:
        raw = bytearray(saved.read_bytes())
        raw[0:8] = b"NOTACKPT"
        saved.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="Not a checkpoint"):
            load_checkpoint(saved)

    def test_flipped_byte(self, saved: Path) -> None:
        raw = bytearray(saved.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        saved.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="Checksum"):
            load_checkpoint(saved)

    def test_truncated(self, saved: Path) -> None:
        saved.write_bytes(saved.read_bytes()[:-20])
        with pytest.raises(CheckpointError):
            load_checkpoint(saved)

    def test_unknown_version(self, saved: Path) -> None:
        body = bytearray(saved.read_bytes()[:-32])
        struct.pack_into("<I", body, len(MAGIC), 99)
        saved.write_bytes(bytes(body) + hashlib.sha256(bytes(body)).digest())
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(saved)

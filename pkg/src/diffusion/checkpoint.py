"""
Versioned binary checkpoints.

Layout (little-endian):

    8 bytes   magic b"SRPOCKPT"
    uint32    format version
    uint32    length of the JSON config block
    bytes     UTF-8 JSON config block
    uint64    parameter count
    float64[] parameters
    32 bytes  SHA-256 over everything above
"""

from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import json
import logging
from pathlib import Path
import struct
from typing import Any

import numpy as np

from ..config.config_models import DenoiserConfig
from ..exceptions import CheckpointError
from .denoiser import DenoiserModel, PolicyParams
from .schedule import NoiseSchedule, make_schedule

logger = logging.getLogger(__name__)

MAGIC = b"SRPOCKPT"
FORMAT_VERSION = 1
_DIGEST_SIZE = 32


@dataclass
class Checkpoint:
    """Decoded checkpoint contents."""

    theta: np.ndarray
    config: dict[str, Any]
    metadata: dict[str, Any] = field(default_factory=dict)

    def build_model(self) -> tuple[DenoiserModel, NoiseSchedule]:
        """Rebuild the denoiser and schedule described by the config block."""
        try:
            den_cfg = DenoiserConfig(**self.config["denoiser"])
            sched_cfg = self.config["schedule"]
            sched = make_schedule(sched_cfg["T"], sched_cfg["beta_min"], sched_cfg["beta_max"])
            model = DenoiserModel(den_cfg, self.config["state_dim"], sched.T)
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"Incomplete checkpoint config: {e}") from e
        if self.theta.shape != (model.layout.size,):
            raise CheckpointError(
                "Parameter count does not match the stored architecture",
                expected=model.layout.size,
                actual=self.theta.shape[0],
            )
        model.params = PolicyParams(theta=self.theta.copy(), layout=model.layout)
        return model, sched


def save_checkpoint(
    path: str | Path,
    model: DenoiserModel,
    sched: NoiseSchedule,
    config_hash: str | None = None,
    metadata: dict[str, Any] | None = None,
) -> Path:
    """Write ``model.params`` with its architecture and schedule."""
    path = Path(path)
    block = {
        "denoiser": model.config.model_dump(mode="json"),
        "state_dim": model.state_dim,
        "schedule": sched.to_dict(),
        "config_hash": config_hash,
        "metadata": metadata or {},
    }
    config_bytes = json.dumps(block, sort_keys=True).encode("utf-8")
    theta = np.ascontiguousarray(model.params.theta, dtype="<f8")

    body = b"".join(
        [
            MAGIC,
            struct.pack("<II", FORMAT_VERSION, len(config_bytes)),
            config_bytes,
            struct.pack("<Q", theta.shape[0]),
            theta.tobytes(),
        ]
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(body)
        f.write(hashlib.sha256(body).digest())
    logger.info(f"Saved checkpoint {path} ({theta.shape[0]} parameters)")
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """
    Read and verify a checkpoint.

    Raises:
        CheckpointError: On a missing file, bad magic, unknown version,
            truncation or checksum mismatch
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError("Checkpoint not found", path=str(path))
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 8 + _DIGEST_SIZE or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError("Not a checkpoint file", path=str(path))

    body, digest = raw[:-_DIGEST_SIZE], raw[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("Checksum mismatch", path=str(path))

    offset = len(MAGIC)
    version, config_len = struct.unpack_from("<II", body, offset)
    if version != FORMAT_VERSION:
        raise CheckpointError("Unsupported checkpoint version", path=str(path), version=version)
    offset += 8
    try:
        block = json.loads(body[offset : offset + config_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Corrupt config block: {e}", path=str(path)) from e
    offset += config_len

    (count,) = struct.unpack_from("<Q", body, offset)
    offset += 8
    if len(body) - offset != 8 * count:
        raise CheckpointError("Truncated parameter array", path=str(path), count=count)
    theta = np.frombuffer(body, dtype="<f8", count=count, offset=offset).astype(np.float64)
    logger.debug(f"Loaded checkpoint {path} (version {version}, {count} parameters)")
    return Checkpoint(theta=theta, config=block, metadata=block.get("metadata", {}))


def load_model(path: str | Path) -> tuple[DenoiserModel, NoiseSchedule, Checkpoint]:
    """Convenience wrapper: decode and rebuild in one call."""
    ckpt = load_checkpoint(path)
    model, sched = ckpt.build_model()
    return model, sched, ckpt

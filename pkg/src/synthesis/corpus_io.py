"""
Corpus directory layout.

    <dir>/clean/NNNN.ppm
    <dir>/smoky/NNNN.ppm
    <dir>/transmission/NNNN.npy
    <dir>/manifest.json      seed, config, split, hashes
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import logging
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..config.config_models import SmokeConfig
from ..exceptions import CorpusError
from ..imaging.image_core import ImageTensor
from ..imaging.ppm_io import list_ppm, read_ppm, write_ppm
from .smoke_synth import PairedSample, corpus_hash, split_indices

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class LoadedCorpus:
    """Samples read back from disk plus their manifest."""

    root: Path
    manifest: dict[str, Any]
    samples: list[PairedSample]
    names: list[str] = field(default_factory=list)

    @property
    def train(self) -> list[PairedSample]:
        return [self.samples[i] for i in self.manifest["split"]["train"]]

    @property
    def val(self) -> list[PairedSample]:
        return [self.samples[i] for i in self.manifest["split"]["val"]]

    def pair_keys(self, indices: Sequence[int]) -> list[tuple[str, str]]:
        """(smoky, clean) table keys of the given samples."""
        return [
            (
                image_key(self.root / "smoky" / self.names[i], self.root),
                image_key(self.root / "clean" / self.names[i], self.root),
            )
            for i in indices
        ]


def image_key(path: str | Path, corpus_root: str | Path | None = None) -> str:
    """
    Key of an image file in embedding and score tables.

    The POSIX path relative to ``corpus_root`` when the file lies inside it,
    otherwise ``<parent directory name>/<file name>``.
    """
    path = Path(path)
    if corpus_root is not None:
        try:
            return path.resolve().relative_to(Path(corpus_root).resolve()).as_posix()
        except ValueError:
            pass
    return f"{path.parent.name}/{path.name}"


def sample_name(index: int) -> str:
    return f"{index:04d}.ppm"


def build_manifest(
    samples: Sequence[PairedSample],
    cfg: SmokeConfig,
    height: int,
    width: int,
    train_ratio: float,
    config_hash: str | None = None,
) -> dict[str, Any]:
    train, val = split_indices(len(samples), train_ratio)
    return {
        "seed": cfg.seed,
        "config": cfg.model_dump(mode="json"),
        "n": len(samples),
        "height": height,
        "width": width,
        "train_ratio": train_ratio,
        "split": {"train": train, "val": val},
        "files": [sample_name(i) for i in range(len(samples))],
        "corpus_hash": corpus_hash(samples),
        "config_hash": config_hash,
    }


def write_corpus(
    samples: Sequence[PairedSample],
    out_dir: str | Path,
    cfg: SmokeConfig,
    train_ratio: float,
    config_hash: str | None = None,
) -> dict[str, Any]:
    """Write samples and manifest; returns the manifest."""
    root = Path(out_dir)
    if not samples:
        raise CorpusError("Refusing to write an empty corpus", path=str(root))
    first = samples[0].clean
    manifest = build_manifest(samples, cfg, first.height, first.width, train_ratio, config_hash)

    for i, s in enumerate(samples):
        name = sample_name(i)
        write_ppm(root / "clean" / name, s.clean)
        write_ppm(root / "smoky" / name, s.smoky)
        if s.transmission is not None:
            t_path = root / "transmission" / name.replace(".ppm", ".npy")
            t_path.parent.mkdir(parents=True, exist_ok=True)
            np.save(t_path, s.transmission)

    with open(root / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    logger.info(f"Wrote {len(samples)} pairs to {root}")
    return manifest


def read_manifest(corpus_dir: str | Path) -> dict[str, Any]:
    path = Path(corpus_dir) / MANIFEST_NAME
    if not path.exists():
        raise CorpusError("Corpus manifest not found", path=str(path))
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise CorpusError(f"Malformed manifest: {e}", path=str(path)) from e


def load_corpus(corpus_dir: str | Path) -> LoadedCorpus:
    """Read a corpus written by ``write_corpus``."""
    root = Path(corpus_dir)
    manifest = read_manifest(root)
    names = manifest.get("files") or [p.name for p in list_ppm(root / "smoky")]
    samples = []
    for name in names:
        t_path = root / "transmission" / name.replace(".ppm", ".npy")
        t = np.load(t_path) if t_path.exists() else None
        samples.append(
            PairedSample(
                clean=read_ppm(root / "clean" / name),
                smoky=read_ppm(root / "smoky" / name),
                transmission=t,
            )
        )
    if len(samples) != manifest["n"]:
        raise CorpusError(
            "Manifest count does not match files", path=str(root), n=manifest["n"], found=len(samples)
        )
    return LoadedCorpus(root=root, manifest=manifest, samples=samples, names=list(names))


def load_images(directory: str | Path) -> tuple[list[str], list[ImageTensor]]:
    """All PPM images of a directory, sorted by name."""
    paths = list_ppm(directory)
    if not paths:
        raise CorpusError("No PPM images found", path=str(directory))
    return [p.name for p in paths], [read_ppm(p) for p in paths]

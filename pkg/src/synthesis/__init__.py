"""
Synthetic smoky/clean corpus generation and storage.
"""

from ..config.config_models import SmokeConfig
from .corpus_io import (
    MANIFEST_NAME,
    LoadedCorpus,
    image_key,
    load_corpus,
    load_images,
    read_manifest,
    write_corpus,
)
from .smoke_synth import (
    TRANSMISSION_FLOOR,
    DensityModes,
    PairedSample,
    apply_smoke,
    corpus_hash,
    draw_density_modes,
    evaluate_density,
    gen_corpus,
    make_sample,
    split_indices,
    synth_transmission,
    tissue_texture,
)

__all__ = [
    "MANIFEST_NAME",
    "TRANSMISSION_FLOOR",
    "DensityModes",
    "LoadedCorpus",
    "PairedSample",
    "SmokeConfig",
    "apply_smoke",
    "corpus_hash",
    "draw_density_modes",
    "evaluate_density",
    "gen_corpus",
    "image_key",
    "load_corpus",
    "load_images",
    "make_sample",
    "read_manifest",
    "split_indices",
    "synth_transmission",
    "tissue_texture",
    "write_corpus",
]

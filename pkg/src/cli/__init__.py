"""
Command implementations for the ``smoke-rpo`` entry point.
"""

from .commands import (
    apply_ablations,
    build_reward,
    cmd_concepts,
    cmd_pretrain,
    cmd_priors,
    cmd_report,
    cmd_restore,
    cmd_rpo,
    cmd_score,
    cmd_synth,
    concept_vector,
    prepare_out_dir,
)

__all__ = [
    "apply_ablations",
    "build_reward",
    "cmd_concepts",
    "cmd_pretrain",
    "cmd_priors",
    "cmd_report",
    "cmd_restore",
    "cmd_rpo",
    "cmd_score",
    "cmd_synth",
    "concept_vector",
    "prepare_out_dir",
]

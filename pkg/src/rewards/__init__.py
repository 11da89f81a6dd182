"""
Reward terms: physics-guided, concept-semantic and reference-free quality.
"""

from .physics import (
    PhysicsRewardBreakdown,
    PriorReference,
    build_prior_reference,
    physics_breakdown_row,
    reward_inter,
    reward_intra,
    reward_physics,
)
from .quality import (
    AffineNormalizedScorer,
    CeiqProxyScorer,
    ExternalScoreScorer,
    LiqeSlotScorer,
    QualityResult,
    QualityScorer,
    build_scorers,
    ceiq_proxy,
    equalize_luminance,
    global_ssim,
    luminance_entropy,
    read_score_table,
    reward_quality,
)
from .semantic import (
    ConceptPair,
    EmbeddingProvider,
    HistogramProjectionProvider,
    PrecomputedEmbeddingProvider,
    build_provider,
    cosine,
    match_loss,
    reward_concept,
    train_concepts,
)

__all__ = [
    "AffineNormalizedScorer",
    "CeiqProxyScorer",
    "ConceptPair",
    "EmbeddingProvider",
    "ExternalScoreScorer",
    "HistogramProjectionProvider",
    "LiqeSlotScorer",
    "PhysicsRewardBreakdown",
    "PrecomputedEmbeddingProvider",
    "PriorReference",
    "QualityResult",
    "QualityScorer",
    "build_prior_reference",
    "build_provider",
    "build_scorers",
    "ceiq_proxy",
    "cosine",
    "equalize_luminance",
    "global_ssim",
    "luminance_entropy",
    "match_loss",
    "physics_breakdown_row",
    "read_score_table",
    "reward_concept",
    "reward_inter",
    "reward_intra",
    "reward_physics",
    "reward_quality",
    "train_concepts",
]

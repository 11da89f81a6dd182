"""
Composite reward and group-relative advantages.

Rollouts sharing one condition form a group; each reward is standardized
against its own group's mean and population standard deviation, which
replaces a learned value baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import Sequence

import numpy as np

from ..config.config_models import RewardWeights
from ..diffusion.sampler import Trajectory
from ..exceptions import DimensionError, DomainError, PrerequisiteError, require_finite
from ..imaging.image_core import ImageTensor
from ..rewards.physics import PhysicsRewardBreakdown, PriorReference, reward_physics
from ..rewards.quality import QualityScorer, reward_quality
from ..rewards.semantic import ConceptPair, EmbeddingProvider, reward_concept

logger = logging.getLogger(__name__)


def total_reward(
    r_pg: float, r_rf: float, r_vc: float, weights: RewardWeights | None = None
) -> float:
    """Weighted sum ``w_pg*R_PG + w_rf*R_RF + w_vc*R_VC`` (unit weights by default)."""
    for name, value in (("R_PG", r_pg), ("R_RF", r_rf), ("R_VC", r_vc)):
        require_finite(float(value), name)
    w = weights or RewardWeights()
    return float(w.pg * r_pg + w.rf * r_rf + w.vc * r_vc)


def group_advantages(rewards: Sequence[float], advantage_eps: float = 1e-8) -> np.ndarray:
    """
    ``(r_i - mean) / max(std, advantage_eps)`` with the population std.

    Raises:
        DomainError: With fewer than two rewards or a non-positive floor
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise DomainError("Advantages need a group of at least two rewards", field="rewards", value=r.size)
    if advantage_eps <= 0.0:
        raise DomainError("Variance floor must be positive", field="advantage_eps", value=advantage_eps)
    require_finite(r, "rewards")
    centered = r - r.mean()
    return centered / max(float(r.std()), advantage_eps)


@dataclass(frozen=True)
class RewardBreakdown:
    """All reward terms of one restored image."""

    r_pg: float
    r_rf: float
    r_vc: float
    total: float
    physics: PhysicsRewardBreakdown | None = None
    quality_terms: dict[str, float] = field(default_factory=dict)

    def as_row(self) -> dict[str, float]:
        row = {"r_pg": self.r_pg, "r_rf": self.r_rf, "r_vc": self.r_vc, "total": self.total}
        row.update({f"q_{k}": v for k, v in self.quality_terms.items()})
        return row


class CompositeReward:
    """
    Scores a restoration against its smoky input.

    A term whose ingredients are missing contributes zero and must carry a
    zero weight; terms whose ingredients are present are always evaluated so
    they show up in diagnostics even when ablated.
    """

    def __init__(
        self,
        weights: RewardWeights,
        priors: PriorReference | None = None,
        concepts: ConceptPair | None = None,
        provider: EmbeddingProvider | None = None,
        scorers: Sequence[QualityScorer] | None = None,
    ):
        self.weights = weights
        self.priors = priors
        self.concepts = concepts
        self.provider = provider
        self.scorers = list(scorers or [])

        if weights.pg > 0.0 and priors is None:
            raise PrerequisiteError("Physics reward enabled without a prior reference", missing="priors")
        if weights.vc > 0.0 and (concepts is None or provider is None):
            raise PrerequisiteError("Concept reward enabled without a concept pair", missing="concepts")
        if weights.rf > 0.0 and not self.scorers:
            raise PrerequisiteError("Quality reward enabled without scorers", missing="scorers")
        if concepts is not None and provider is not None and concepts.dim != provider.dim:
            raise DimensionError("Concept and embedding dimensions differ", expected=provider.dim, actual=concepts.dim)
        if not weights.is_default():
            logger.warning(
                f"Non-default reward weights: pg={weights.pg}, rf={weights.rf}, vc={weights.vc}"
            )

    def evaluate(self, inp: ImageTensor, pred: ImageTensor, key: str | None = None) -> RewardBreakdown:
        physics = reward_physics(inp, pred, self.priors) if self.priors is not None else None
        r_pg = physics.R_PG if physics is not None else 0.0

        quality_terms: dict[str, float] = {}
        r_rf = 0.0
        if self.scorers:
            q = reward_quality(pred, self.scorers, key)
            r_rf, quality_terms = q.total, q.breakdown

        r_vc = 0.0
        if self.concepts is not None and self.provider is not None:
            r_vc = reward_concept(self.concepts, self.provider.embed(pred, key))

        return RewardBreakdown(
            r_pg=r_pg,
            r_rf=r_rf,
            r_vc=r_vc,
            total=total_reward(r_pg, r_rf, r_vc, self.weights),
            physics=physics,
            quality_terms=quality_terms,
        )


@dataclass
class GroupBatch:
    """One condition, its G rollouts, their rewards and advantages."""

    condition: ImageTensor
    trajectories: list[Trajectory]
    rewards: list[RewardBreakdown]
    advantages: np.ndarray

    def __post_init__(self) -> None:
        self.advantages = np.asarray(self.advantages, dtype=np.float64)
        g = len(self.trajectories)
        if g < 2:
            raise DomainError("A group needs at least two rollouts", field="G", value=g)
        if len(self.rewards) != g or self.advantages.shape != (g,):
            raise DimensionError(
                "Group records differ in length",
                expected=g,
                actual=(len(self.rewards), self.advantages.shape),
            )

    @property
    def G(self) -> int:
        return len(self.trajectories)

    @property
    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.rewards])

    def term_mean(self, name: str) -> float:
        return float(np.mean([getattr(r, name) for r in self.rewards]))


def build_group_batch(
    condition: ImageTensor,
    trajectories: Sequence[Trajectory],
    reward: CompositeReward,
    advantage_eps: float = 1e-8,
) -> GroupBatch:
    """Score every rollout and standardize within the group."""
    rewards = [reward.evaluate(condition, tr.final) for tr in trajectories]
    adv = group_advantages([r.total for r in rewards], advantage_eps)
    return GroupBatch(condition=condition, trajectories=list(trajectories), rewards=rewards, advantages=adv)

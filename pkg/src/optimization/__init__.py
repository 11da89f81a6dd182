"""
Group-relative policy optimization of the diffusion restorer.
"""

from .advantages import (
    CompositeReward,
    GroupBatch,
    RewardBreakdown,
    build_group_batch,
    group_advantages,
    total_reward,
)
from .objective import (
    ObjectiveResult,
    clipped_surrogate,
    clipped_terms,
    importance_ratio,
    kl_penalty,
    rpo_objective_and_grad,
    step_log_ratios,
    trajectory_ratio,
)
from .optimizers import AdamWOptimizer, Optimizer, SgdOptimizer, build_optimizer
from .trainer import (
    PretrainRecord,
    PretrainResult,
    RpoResult,
    StepDiagnostics,
    pretrain,
    pretrain_loss_and_grad,
    pretrain_step,
    rpo_step,
    rpo_train,
)

__all__ = [
    "AdamWOptimizer",
    "CompositeReward",
    "GroupBatch",
    "ObjectiveResult",
    "Optimizer",
    "PretrainRecord",
    "PretrainResult",
    "RewardBreakdown",
    "RpoResult",
    "SgdOptimizer",
    "StepDiagnostics",
    "build_group_batch",
    "build_optimizer",
    "clipped_surrogate",
    "clipped_terms",
    "group_advantages",
    "importance_ratio",
    "kl_penalty",
    "pretrain",
    "pretrain_loss_and_grad",
    "pretrain_step",
    "rpo_objective_and_grad",
    "rpo_step",
    "rpo_train",
    "step_log_ratios",
    "total_reward",
    "trajectory_ratio",
]

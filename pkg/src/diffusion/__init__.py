"""
Conditional diffusion restorer treated as a stochastic Gaussian policy.
"""

from .checkpoint import Checkpoint, load_checkpoint, load_model, save_checkpoint
from .denoiser import DenoiserInputs, DenoiserModel, ForwardCache, ParamLayout, PolicyParams
from .sampler import (
    StepEvaluation,
    Trajectory,
    evaluate_steps,
    replay_trajectory,
    restore,
    reverse_step,
    rollout,
    sample_group,
    trajectory_log_density,
    trajectory_log_density_grad,
)
from .schedule import NoiseSchedule, forward_noise, make_schedule

__all__ = [
    "Checkpoint",
    "DenoiserInputs",
    "DenoiserModel",
    "ForwardCache",
    "NoiseSchedule",
    "ParamLayout",
    "PolicyParams",
    "StepEvaluation",
    "Trajectory",
    "evaluate_steps",
    "forward_noise",
    "load_checkpoint",
    "load_model",
    "make_schedule",
    "replay_trajectory",
    "restore",
    "reverse_step",
    "rollout",
    "sample_group",
    "save_checkpoint",
    "trajectory_log_density",
    "trajectory_log_density_grad",
]

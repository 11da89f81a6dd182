"""
Importance ratios, clipped surrogate and KL anchor.

All quantities are evaluated on recorded trajectories: both the current and
the snapshot parameters re-run the denoiser at the stored states, so the
ratio compares two Gaussian policies on the very same actions.

Gradient convention: the objective ``L_RPO - lambda_KL * D_KL`` is maximized.
Advantages and every snapshot quantity are constants. A trajectory (or step)
contributes ``A * rho * grad log pi`` while its unclipped branch attains the
min, and nothing while the clipped branch is strictly smaller.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import Sequence

import numpy as np

from ..config.config_models import RatioMode
from ..diffusion.denoiser import DenoiserModel
from ..diffusion.sampler import Trajectory, evaluate_steps
from ..exceptions import DimensionError, DomainError, NumericError

logger = logging.getLogger(__name__)


def _check_clip(clip_eps: float) -> None:
    if not 0.0 < clip_eps < 1.0:
        raise DomainError("Clip range must lie in (0, 1)", field="clip_eps", value=clip_eps)


def _exp_checked(log_value: np.ndarray | float, quantity: str) -> np.ndarray:
    with np.errstate(over="ignore"):
        out = np.exp(log_value)
    if not np.all(np.isfinite(out)):
        raise NumericError("Importance ratio overflow", quantity=quantity)
    return out


def step_log_ratios(
    model: DenoiserModel,
    theta: np.ndarray,
    theta_old: np.ndarray,
    traj: Trajectory,
    steps: Sequence[int] | None = None,
) -> np.ndarray:
    """Per-step ``log rho = -(||x - mu_theta||^2 - ||x - mu_old||^2) / (2 sigma^2)``."""
    new = evaluate_steps(model, theta, traj, steps)
    old = evaluate_steps(model, theta_old, traj, new.steps)
    return new.log_terms() - old.log_terms()


def importance_ratio(
    model: DenoiserModel,
    theta: np.ndarray,
    theta_old: np.ndarray,
    traj: Trajectory,
    t: int,
) -> float:
    """Ratio of one reverse step at diffusion time ``t`` (1..T)."""
    if not 1 <= t <= traj.num_steps:
        raise DomainError("Time step out of range", field="t", value=t)
    k = traj.num_steps - t
    return float(_exp_checked(step_log_ratios(model, theta, theta_old, traj, [k])[0], "rho"))


def trajectory_ratio(
    model: DenoiserModel,
    theta: np.ndarray,
    theta_old: np.ndarray,
    traj: Trajectory,
    steps: Sequence[int] | None = None,
) -> float:
    """Product of step ratios, computed as the exponential of their log sum."""
    log_rho = float(step_log_ratios(model, theta, theta_old, traj, steps).sum())
    return float(_exp_checked(log_rho, "rho"))


def clipped_terms(ratios: np.ndarray, advantages: np.ndarray, clip_eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample ``min(rho*A, clip(rho)*A)`` and the mask where the unclipped branch is active."""
    unclipped = ratios * advantages
    clipped = np.clip(ratios, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    return np.minimum(unclipped, clipped), unclipped <= clipped


def clipped_surrogate(ratios: Sequence[float], advantages: Sequence[float], clip_eps: float) -> float:
    """
    ``(1/G) * sum_i min(rho_i * A_i, clip(rho_i, 1 - eps, 1 + eps) * A_i)``.

    Returned as an objective to maximize.
    """
    _check_clip(clip_eps)
    rho = np.asarray(ratios, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    if rho.shape != adv.shape or rho.ndim != 1:
        raise DimensionError("Ratios and advantages differ in length", expected=adv.shape, actual=rho.shape)
    terms, _ = clipped_terms(rho, adv, clip_eps)
    return float(terms.mean())


def kl_penalty(
    model: DenoiserModel,
    theta: np.ndarray,
    theta_ref: np.ndarray,
    trajs: Sequence[Trajectory],
    steps: Sequence[int] | None = None,
) -> float:
    """
    Mean over trajectories of ``sum_t ||mu_theta - mu_ref||^2 / (2 sigma_t^2)``.

    Closed-form KL between equal-variance Gaussians at the recorded states.
    """
    if not trajs:
        raise DomainError("KL penalty needs at least one trajectory", field="trajs")
    total = 0.0
    for traj in trajs:
        new = evaluate_steps(model, theta, traj, steps)
        ref = evaluate_steps(model, theta_ref, traj, new.steps)
        diff = new.means - ref.means
        total += float((np.sum(diff * diff, axis=1) / (2.0 * new.sigmas**2)).sum())
    return total / len(trajs)


@dataclass
class ObjectiveResult:
    """Objective value, gradient and diagnostics at a fixed batch."""

    objective: float
    surrogate: float
    kl: float
    grad: np.ndarray
    ratios: list[float] = field(default_factory=list)
    clip_fraction: float = 0.0
    n_steps: int = 0

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios)) if self.ratios else 1.0


def rpo_objective_and_grad(
    model: DenoiserModel,
    theta: np.ndarray,
    theta_old: np.ndarray,
    theta_ref: np.ndarray,
    trajs: Sequence[Trajectory],
    advantages: Sequence[float],
    clip_eps: float,
    lambda_kl: float,
    ratio_mode: RatioMode | str = RatioMode.TRAJECTORY,
    step_stride: int = 1,
) -> ObjectiveResult:
    """
    ``L_RPO - lambda_KL * D_KL`` and its analytic gradient w.r.t. ``theta``.

    Args:
        model: Denoiser architecture
        theta: Parameters being optimized
        theta_old: Snapshot that generated ``trajs``
        theta_ref: Frozen reference for the KL anchor
        trajs: Recorded rollouts
        advantages: One advantage per trajectory
        clip_eps: Clip half-width
        lambda_kl: KL weight
        ratio_mode: One ratio per trajectory, or one clipped term per step
        step_stride: Evaluate every k-th reverse step (ratio and KL alike)
    """
    _check_clip(clip_eps)
    if lambda_kl < 0.0:
        raise DomainError("KL weight must be non-negative", field="lambda_kl", value=lambda_kl)
    adv = np.asarray(advantages, dtype=np.float64)
    if adv.shape != (len(trajs),):
        raise DimensionError("One advantage per trajectory expected", expected=len(trajs), actual=adv.shape)
    mode = RatioMode(ratio_mode)
    n = len(trajs)

    grad = np.zeros(model.layout.size)
    surrogate = 0.0
    kl = 0.0
    ratios: list[float] = []
    n_clipped = 0
    n_terms = 0
    n_steps = 0

    for traj, a in zip(trajs, adv):
        steps = traj.default_steps(step_stride)
        if not steps:
            raise NumericError("Trajectory has no step with a positive sampling scale", quantity="sigma")
        new = evaluate_steps(model, theta, traj, steps)
        old = evaluate_steps(model, theta_old, traj, steps)
        ref = evaluate_steps(model, theta_ref, traj, steps)
        log_rho = new.log_terms() - old.log_terms()
        inv_var = 1.0 / (new.sigmas**2)
        n_steps += len(steps)

        if mode == RatioMode.TRAJECTORY:
            rho = _exp_checked(log_rho.sum(), "rho")
            terms, active = clipped_terms(np.array([rho]), np.array([a]), clip_eps)
            surrogate += float(terms[0])
            ratios.append(float(rho))
            n_clipped += int(not active[0])
            n_terms += 1
            weights = np.full(len(steps), a * rho if active[0] else 0.0)
        else:
            rho = _exp_checked(log_rho, "rho")
            terms, active = clipped_terms(rho, np.full(len(steps), a), clip_eps)
            surrogate += float(terms.mean())
            ratios.append(float(rho.mean()))
            n_clipped += int((~active).sum())
            n_terms += len(steps)
            weights = np.where(active, a * rho, 0.0) / len(steps)

        diff = new.means - ref.means
        kl += float((np.sum(diff * diff, axis=1) * inv_var / 2.0).sum())

        # d/dmu of (surrogate - lambda*KL) for this trajectory
        out_grad = (weights * inv_var)[:, None] * new.residuals - lambda_kl * inv_var[:, None] * diff
        grad += model.backward(theta, new.cache, out_grad)

    surrogate /= n
    kl /= n
    grad /= n
    if not np.all(np.isfinite(grad)):
        raise NumericError("Non-finite objective gradient", quantity="grad")
    return ObjectiveResult(
        objective=surrogate - lambda_kl * kl,
        surrogate=surrogate,
        kl=kl,
        grad=grad,
        ratios=ratios,
        clip_fraction=n_clipped / max(n_terms, 1),
        n_steps=n_steps,
    )

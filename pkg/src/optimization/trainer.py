"""
Training loops: supervised cold start and group-relative policy refinement.

The cold start regresses the denoiser's mean onto the true posterior mean of
the forward process, conditioned on the smoky image. Refinement then treats
each reverse step as a Gaussian action and climbs the clipped surrogate of
standardized group rewards, anchored to the cold-start weights by a KL
penalty.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
import logging
import time
from typing import Any, Sequence

import numpy as np

from ..config.config_models import PretrainConfig, RatioMode, RpoConfig
from ..diffusion.denoiser import DenoiserModel, PolicyParams
from ..diffusion.sampler import sample_group
from ..diffusion.schedule import NoiseSchedule, forward_noise
from ..exceptions import DomainError, NumericError
from ..imaging.image_core import ImageTensor
from ..synthesis.smoke_synth import PairedSample
from .advantages import CompositeReward, GroupBatch, build_group_batch
from .objective import rpo_objective_and_grad
from .optimizers import Optimizer, build_optimizer

logger = logging.getLogger(__name__)


# ====== Cold start ======


def pretrain_loss_and_grad(
    model: DenoiserModel,
    sched: NoiseSchedule,
    pair: PairedSample,
    t: int,
    eps: np.ndarray,
    theta: np.ndarray | None = None,
    concept: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """
    Mean squared error between predicted and true posterior mean at step ``t``.

    ``x_t`` is the clean patch noised to level ``t``; the target is
    ``c0 * x_0 + ct * x_t`` and the network is conditioned on the smoky patch.
    """
    theta = model.params.theta if theta is None else theta
    x0 = pair.clean.flat()
    x_t = forward_noise(x0, t, eps, sched)
    c0, ct = sched.posterior_coefs(t)
    target = c0 * x0 + ct * x_t
    inputs = model.build_inputs(x_t, pair.smoky.flat(), t, concept)
    dim = model.state_dim

    def loss_grad(mu: np.ndarray) -> np.ndarray:
        return 2.0 * (mu - target) / dim

    mu, grad = model.forward_and_grad(theta, inputs, loss_grad)
    loss = float(np.mean((mu[0] - target) ** 2))
    if not np.isfinite(loss):
        raise NumericError("Non-finite pretraining loss", quantity="loss", t=t)
    return loss, grad


def pretrain_step(
    model: DenoiserModel,
    pair: PairedSample,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    optimizer: Optimizer,
    params: PolicyParams | None = None,
    concept: np.ndarray | None = None,
) -> tuple[PolicyParams, float, int]:
    """
    One supervised update at a random step.

    Returns:
        (updated parameters, loss before the update, sampled t)
    """
    params = params or model.params
    t = int(rng.integers(1, sched.T + 1))
    eps = rng.standard_normal(model.state_dim)
    loss, grad = pretrain_loss_and_grad(model, sched, pair, t, eps, params.theta, concept)
    theta = optimizer.step(params.theta, grad)
    return PolicyParams(theta=theta, layout=params.layout), loss, t


@dataclass
class PretrainRecord:
    step: int
    t: int
    loss: float


@dataclass
class PretrainResult:
    params: PolicyParams
    records: list[PretrainRecord] = field(default_factory=list)
    optimizer: Optimizer | None = None

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.records]


def pretrain(
    model: DenoiserModel,
    sched: NoiseSchedule,
    pairs: Sequence[PairedSample],
    cfg: PretrainConfig,
    concept: np.ndarray | None = None,
    start_step: int = 0,
    on_record: Callable[[PretrainRecord], None] | None = None,
    optimizer: Optimizer | None = None,
) -> PretrainResult:
    """
    Run ``cfg.steps`` supervised updates starting from ``model.params``.

    Step ``s`` draws its pair, time step and noise from a generator seeded by
    ``(cfg.seed, s)``, so resuming at ``start_step`` replays the same data
    stream. Pass the optimizer restored from the checkpoint to continue its
    moments and bias correction; by default a fresh one is built.
    """
    if not pairs:
        raise DomainError("Pretraining needs at least one pair", field="pairs")
    if optimizer is None:
        optimizer = build_optimizer(cfg.optimizer, cfg.lr, cfg.weight_decay)
    params = model.params
    result = PretrainResult(params=params, optimizer=optimizer)

    for step in range(start_step, start_step + cfg.steps):
        rng = np.random.default_rng([cfg.seed, step])
        pair = pairs[int(rng.integers(len(pairs)))]
        params, loss, t = pretrain_step(model, pair, sched, rng, optimizer, params, concept)
        record = PretrainRecord(step=step, t=t, loss=loss)
        result.records.append(record)
        if on_record is not None:
            on_record(record)
        if (step + 1) % cfg.log_every == 0:
            recent = result.losses[-cfg.log_every :]
            logger.info(f"Pretrain step {step + 1}: mean loss {np.mean(recent):.6f}")

    model.params = params
    result.params = params
    return result


# ====== Policy refinement ======


@dataclass
class StepDiagnostics:
    """Diagnostics of one rpo_step."""

    mean_reward: float
    reward_std: float
    reward_var: float
    mean_ratio: float
    clip_fraction: float
    kl: float
    objective: float
    surrogate: float
    grad_norm: float
    n_steps: int
    step_stride: int
    ratio_mode: str

    def as_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def rpo_step(
    model: DenoiserModel,
    params: PolicyParams,
    theta_old: PolicyParams,
    theta_ref: PolicyParams,
    batch: GroupBatch | Sequence[GroupBatch],
    cfg: RpoConfig,
    optimizer: Optimizer | None = None,
) -> tuple[PolicyParams, StepDiagnostics]:
    """
    One ascent step on ``L_RPO - lambda_KL * D_KL``.

    With several group batches their gradients are averaged before the
    single update.
    """
    batches = [batch] if isinstance(batch, GroupBatch) else list(batch)
    if not batches:
        raise DomainError("rpo_step needs at least one group batch", field="batch")
    optimizer = optimizer or build_optimizer(cfg.optimizer, cfg.lr, cfg.weight_decay)

    results = [
        rpo_objective_and_grad(
            model,
            params.theta,
            theta_old.theta,
            theta_ref.theta,
            b.trajectories,
            b.advantages,
            cfg.clip_eps,
            cfg.lambda_kl,
            cfg.ratio_mode,
            cfg.step_stride,
        )
        for b in batches
    ]
    grad = np.mean([r.grad for r in results], axis=0)
    if not np.all(np.isfinite(grad)):
        raise NumericError("Non-finite policy gradient", quantity="grad")
    theta = optimizer.step(params.theta, -grad)

    totals = np.concatenate([b.totals for b in batches])
    diag = StepDiagnostics(
        mean_reward=float(totals.mean()),
        reward_std=float(totals.std()),
        reward_var=float(np.mean([b.totals.var() for b in batches])),
        mean_ratio=float(np.mean([r.mean_ratio for r in results])),
        clip_fraction=float(np.mean([r.clip_fraction for r in results])),
        kl=float(np.mean([r.kl for r in results])),
        objective=float(np.mean([r.objective for r in results])),
        surrogate=float(np.mean([r.surrogate for r in results])),
        grad_norm=float(np.linalg.norm(grad)),
        n_steps=sum(r.n_steps for r in results),
        step_stride=cfg.step_stride,
        ratio_mode=RatioMode(cfg.ratio_mode).value,
    )
    return PolicyParams(theta=theta, layout=params.layout), diag


@dataclass
class RpoResult:
    params: PolicyParams
    metrics: list[dict[str, float]] = field(default_factory=list)


def rpo_train(
    model: DenoiserModel,
    sched: NoiseSchedule,
    conditions: Sequence[ImageTensor],
    reward: CompositeReward,
    cfg: RpoConfig,
    concept: np.ndarray | None = None,
    on_metrics: Callable[[dict[str, float]], None] | None = None,
) -> RpoResult:
    """
    Refine ``model.params`` on unpaired smoky conditions.

    Each iteration snapshots the old policy, samples ``batch_groups`` groups
    of ``G`` rollouts on randomly chosen conditions, scores and standardizes
    them, then runs ``inner_epochs`` updates. The starting parameters serve
    as the frozen KL reference.
    """
    if not conditions:
        raise DomainError("Refinement needs at least one smoky condition", field="conditions")
    rng = np.random.default_rng(cfg.seed)
    optimizer = build_optimizer(cfg.optimizer, cfg.lr, cfg.weight_decay)
    params = model.params
    theta_ref = params.copy()
    result = RpoResult(params=params)

    for it in range(cfg.iterations):
        start = time.perf_counter()
        theta_old = params.copy()
        batches = []
        for _ in range(cfg.batch_groups):
            cond = conditions[int(rng.integers(len(conditions)))]
            trajs = sample_group(model, sched, cond, cfg.G, rng, theta=theta_old.theta, concept=concept)
            batches.append(build_group_batch(cond, trajs, reward, cfg.advantage_eps))

        for _ in range(cfg.inner_epochs):
            params, diag = rpo_step(model, params, theta_old, theta_ref, batches, cfg, optimizer)

        wall_ms = (time.perf_counter() - start) * 1000.0 if cfg.record_wall_time else 0.0
        row = {
            "iteration": it,
            "mean_reward": diag.mean_reward,
            "reward_var": diag.reward_var,
            "r_pg_mean": float(np.mean([b.term_mean("r_pg") for b in batches])),
            "r_vc_mean": float(np.mean([b.term_mean("r_vc") for b in batches])),
            "r_rf_mean": float(np.mean([b.term_mean("r_rf") for b in batches])),
            "kl": diag.kl,
            "clip_fraction": diag.clip_fraction,
            "wall_ms": wall_ms,
        }
        result.metrics.append(row)
        if on_metrics is not None:
            on_metrics(row)
        logger.debug(f"Iteration {it}: {row}")
        if (it + 1) % cfg.log_every == 0 or it == cfg.iterations - 1:
            logger.info(
                f"RPO iteration {it + 1}/{cfg.iterations}: reward {diag.mean_reward:.4f} "
                f"(var {diag.reward_var:.4g}), kl {diag.kl:.4g}, clip {diag.clip_fraction:.2f}"
            )
        if diag.clip_fraction == 1.0:
            logger.warning(f"Iteration {it}: every ratio clipped; consider a smaller learning rate")

    model.params = params
    result.params = params
    return result

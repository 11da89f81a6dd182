"""
Stochastic reverse diffusion as a Gaussian policy.

Each reverse step ``x_{t-1} = mu_theta(x_t, t) + sigma_t * eps`` is one
action of the policy. A ``Trajectory`` records every state and every noise
draw so that its likelihood can be re-evaluated exactly under any parameter
vector.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Sequence

import numpy as np

from ..exceptions import DimensionError, DomainError, NumericError
from ..imaging.image_core import ImageTensor, clamp_unit
from .denoiser import DenoiserModel, ForwardCache
from .schedule import NoiseSchedule, forward_noise

logger = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """
    One recorded rollout.

    ``states[0]`` is x_T and ``states[T]`` is x_0. Step ``k`` (0-based) runs at
    ``t = timesteps[k] = T - k`` and maps ``states[k]`` to ``states[k + 1]``
    using ``step_means[k] + step_sigmas[k] * step_noises[k]``.
    """

    cond: ImageTensor
    init_noise: np.ndarray
    states: np.ndarray
    step_noises: np.ndarray
    step_means: np.ndarray
    step_sigmas: np.ndarray
    timesteps: np.ndarray
    final: ImageTensor
    concept: np.ndarray | None = None

    def __post_init__(self) -> None:
        n_steps = self.timesteps.shape[0]
        if (
            self.states.shape[0] != n_steps + 1
            or self.step_noises.shape[0] != n_steps
            or self.step_means.shape[0] != n_steps
            or self.step_sigmas.shape[0] != n_steps
        ):
            raise DimensionError("Trajectory record lengths are inconsistent", T=n_steps)

    @property
    def num_steps(self) -> int:
        return int(self.timesteps.shape[0])

    def default_steps(self, stride: int = 1) -> list[int]:
        """Steps with positive sigma, keeping every ``stride``-th one."""
        return [k for k in range(0, self.num_steps, stride) if self.step_sigmas[k] > 0.0]


def _rollout_batch(
    model: DenoiserModel,
    theta: np.ndarray,
    sched: NoiseSchedule,
    cond: ImageTensor,
    init_noises: np.ndarray,
    step_noises: np.ndarray,
    concept: np.ndarray | None,
) -> list[Trajectory]:
    """Run ``B`` rollouts in lockstep as one network batch."""
    c = cond.flat()
    batch, dim = init_noises.shape
    T = sched.T
    states = np.empty((batch, T + 1, dim))
    means = np.empty((batch, T, dim))
    states[:, 0] = forward_noise(np.broadcast_to(c, (batch, dim)), T, init_noises, sched)
    timesteps = np.arange(T, 0, -1)
    sigmas = np.array([sched.sigma(int(t)) for t in timesteps])

    for k, t in enumerate(timesteps):
        inputs = model.build_inputs(states[:, k], c, int(t), concept)
        mu = model.mean(theta, inputs)
        means[:, k] = mu
        states[:, k + 1] = mu + sigmas[k] * step_noises[:, k]

    if not np.all(np.isfinite(states)):
        raise NumericError("Non-finite rollout state", quantity="x_t")

    trajs = []
    for g in range(batch):
        final = ImageTensor.from_array(
            clamp_unit(states[g, T]).reshape(cond.shape), clamp=False
        )
        trajs.append(
            Trajectory(
                cond=cond,
                init_noise=init_noises[g].copy(),
                states=states[g].copy(),
                step_noises=step_noises[g].copy(),
                step_means=means[g].copy(),
                step_sigmas=sigmas.copy(),
                timesteps=timesteps.copy(),
                final=final,
                concept=None if concept is None else np.asarray(concept).copy(),
            )
        )
    return trajs


def rollout(
    model: DenoiserModel,
    sched: NoiseSchedule,
    cond: ImageTensor,
    init_noise: np.ndarray,
    step_noises: np.ndarray,
    theta: np.ndarray | None = None,
    concept: np.ndarray | None = None,
) -> Trajectory:
    """Deterministic rollout from explicit noises (all zeros gives the mean path)."""
    theta = model.params.theta if theta is None else theta
    init_noise = np.asarray(init_noise, dtype=np.float64).reshape(1, -1)
    step_noises = np.asarray(step_noises, dtype=np.float64)[None]
    if step_noises.shape[1:] != (sched.T, model.state_dim):
        raise DimensionError(
            "Step noise shape mismatch", expected=(sched.T, model.state_dim), actual=step_noises.shape[1:]
        )
    return _rollout_batch(model, theta, sched, cond, init_noise, step_noises, concept)[0]


def reverse_step(
    model: DenoiserModel,
    sched: NoiseSchedule,
    x_t: np.ndarray,
    t: int,
    eps: np.ndarray,
    cond: ImageTensor,
    theta: np.ndarray | None = None,
    concept: np.ndarray | None = None,
) -> np.ndarray:
    """
    One stochastic reverse step ``x_{t-1} = mu_theta(x_t, t) + sigma_t * eps``.

    No clamping is applied; only the final image is clamped.
    """
    sigma = sched.sigma(t)
    theta = model.params.theta if theta is None else theta
    inputs = model.build_inputs(np.asarray(x_t), cond.flat(), t, concept)
    mu = model.mean(theta, inputs)[0]
    return mu + sigma * np.asarray(eps, dtype=np.float64)


def sample_group(
    model: DenoiserModel,
    sched: NoiseSchedule,
    cond: ImageTensor,
    G: int,
    rng: np.random.Generator,
    theta: np.ndarray | None = None,
    concept: np.ndarray | None = None,
    deterministic: bool = False,
) -> list[Trajectory]:
    """
    ``G`` independent rollouts sharing one condition.

    Each rollout gets its own noise stream seeded from ``rng``; the whole
    group is a deterministic function of the generator state.

    Raises:
        DomainError: If G < 2
    """
    if G < 2:
        raise DomainError("A group needs at least two rollouts", field="G", value=G)
    theta = model.params.theta if theta is None else theta
    dim = model.state_dim
    if cond.height * cond.width * 3 != dim:
        raise DimensionError("Condition does not match the model state size", expected=dim, actual=cond.shape)

    seeds = rng.integers(0, 2**63 - 1, size=G)
    init_noises = np.empty((G, dim))
    step_noises = np.empty((G, sched.T, dim))
    for g, seed in enumerate(seeds):
        stream = np.random.default_rng(int(seed))
        init_noises[g] = stream.standard_normal(dim)
        step_noises[g] = stream.standard_normal((sched.T, dim))
    if deterministic:
        init_noises[:] = 0.0
        step_noises[:] = 0.0

    trajs = _rollout_batch(model, theta, sched, cond, init_noises, step_noises, concept)
    logger.debug(f"Sampled group of {G} rollouts over {sched.T} steps")
    return trajs


def restore(
    model: DenoiserModel,
    sched: NoiseSchedule,
    cond: ImageTensor,
    rng: np.random.Generator | None = None,
    theta: np.ndarray | None = None,
    concept: np.ndarray | None = None,
) -> ImageTensor:
    """Single restoration; ``rng=None`` runs the zero-noise mean path."""
    dim = model.state_dim
    if rng is None:
        init, steps = np.zeros(dim), np.zeros((sched.T, dim))
    else:
        init, steps = rng.standard_normal(dim), rng.standard_normal((sched.T, dim))
    return rollout(model, sched, cond, init, steps, theta=theta, concept=concept).final


def replay_trajectory(
    model: DenoiserModel, sched: NoiseSchedule, traj: Trajectory, theta: np.ndarray | None = None
) -> Trajectory:
    """Re-run the recorded noises; under the generating parameters states match exactly."""
    return rollout(
        model, sched, traj.cond, traj.init_noise, traj.step_noises, theta=theta, concept=traj.concept
    )


@dataclass
class StepEvaluation:
    """Means of the recorded steps re-evaluated under one parameter vector."""

    steps: list[int]
    means: np.ndarray
    residuals: np.ndarray
    sigmas: np.ndarray
    cache: ForwardCache

    def log_terms(self) -> np.ndarray:
        """Per-step ``-||x_{t-1} - mu||^2 / (2 sigma^2)``."""
        sq = np.sum(self.residuals * self.residuals, axis=1)
        return -sq / (2.0 * self.sigmas**2)


def _resolve_steps(traj: Trajectory, steps: Sequence[int] | None) -> list[int]:
    if steps is None:
        return traj.default_steps()
    steps = [int(k) for k in steps]
    for k in steps:
        if not 0 <= k < traj.num_steps:
            raise DomainError("Step index out of range", field="step", value=k)
        if traj.step_sigmas[k] <= 0.0:
            raise NumericError("Sampling scale is zero on an included step", quantity="sigma", step=k)
    return steps


def evaluate_steps(
    model: DenoiserModel,
    theta: np.ndarray,
    traj: Trajectory,
    steps: Sequence[int] | None = None,
) -> StepEvaluation:
    """
    Re-run the denoiser at the recorded states of ``traj``.

    ``steps`` defaults to every step with positive sigma; passing a step whose
    sigma is zero raises NumericError.
    """
    ks = _resolve_steps(traj, steps)
    x_t = traj.states[ks]
    x_prev = traj.states[[k + 1 for k in ks]]
    inputs = model.build_inputs(x_t, traj.cond.flat(), traj.timesteps[ks], traj.concept)
    mu, cache = model.forward(theta, inputs)
    return StepEvaluation(
        steps=ks, means=mu, residuals=x_prev - mu, sigmas=traj.step_sigmas[ks].copy(), cache=cache
    )


def trajectory_log_density(
    model: DenoiserModel,
    theta: np.ndarray,
    traj: Trajectory,
    steps: Sequence[int] | None = None,
) -> float:
    """Sum over included steps of ``-||x_{t-1} - mu_theta(x_t, t)||^2 / (2 sigma_t^2)``."""
    return float(evaluate_steps(model, theta, traj, steps).log_terms().sum())


def trajectory_log_density_grad(
    model: DenoiserModel,
    theta: np.ndarray,
    traj: Trajectory,
    steps: Sequence[int] | None = None,
) -> tuple[float, np.ndarray]:
    """Log-density and its analytic gradient w.r.t. ``theta``."""
    ev = evaluate_steps(model, theta, traj, steps)
    out_grad = ev.residuals / (ev.sigmas**2)[:, None]
    return float(ev.log_terms().sum()), model.backward(theta, ev.cache, out_grad)

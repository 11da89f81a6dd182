#!/usr/bin/env python3
"""
Test suite for rewards aggregation, group advantages, importance ratios,
the clipped surrogate and the KL anchor.
"""

from collections.abc import Callable
import logging

import numpy as np
import pytest

from src.config.config_models import RatioMode, RewardWeights
from src.diffusion.denoiser import DenoiserModel
from src.diffusion.sampler import Trajectory, sample_group, trajectory_log_density, trajectory_log_density_grad
from src.diffusion.schedule import NoiseSchedule
from src.exceptions import DomainError, NumericError, PrerequisiteError
from src.imaging.image_core import ImageTensor
from src.optimization.advantages import CompositeReward, build_group_batch, group_advantages, total_reward
from src.optimization.objective import (
    clipped_surrogate,
    importance_ratio,
    kl_penalty,
    rpo_objective_and_grad,
    step_log_ratios,
    trajectory_ratio,
)
from src.rewards.physics import PriorReference
from src.rewards.quality import CeiqProxyScorer

# ============================== Fixtures ====================================


@pytest.fixture
def trajs(model: DenoiserModel, schedule: NoiseSchedule, random_image: ImageTensor) -> list[Trajectory]:
    """Three rollouts recorded under the model's own parameters."""
    return sample_group(model, schedule, random_image, 3, np.random.default_rng(21))


@pytest.fixture
def quality_only() -> CompositeReward:
    return CompositeReward(RewardWeights(pg=0.0, rf=1.0, vc=0.0), scorers=[CeiqProxyScorer()])


def shifted_b2(model: DenoiserModel, theta: np.ndarray, shift: np.ndarray) -> np.ndarray:
    out = theta.copy()
    a, b = model.layout.offsets()["b2"]
    out[a:b] += shift
    return out


def finite_difference(f: Callable[[np.ndarray], float], theta: np.ndarray, coords: np.ndarray, h: float = 1e-6) -> np.ndarray:
    out = np.empty(len(coords))
    for j, i in enumerate(coords):
        plus, minus = theta.copy(), theta.copy()
        plus[i] += h
        minus[i] -= h
        out[j] = (f(plus) - f(minus)) / (2.0 * h)
    return out


# ============================== Advantages ==================================


class TestGroupAdvantages:
    """Group-standardized rewards."""

    def test_known_values(self) -> None:
        adv = group_advantages([1.0, 2.0, 3.0, 4.0])
        expected = np.array([-1.5, -0.5, 0.5, 1.5]) / np.sqrt(1.25)
        assert np.allclose(adv, expected, atol=1e-12)

    def test_constant_group_is_zero(self) -> None:
        assert np.all(group_advantages([0.3, 0.3, 0.3]) == 0.0)

    def test_zero_mean_unit_std(self, rng: np.random.Generator) -> None:
        adv = group_advantages(rng.normal(size=8))
        assert adv.mean() == pytest.approx(0.0, abs=1e-12)
        assert adv.std() == pytest.approx(1.0, abs=1e-12)

    def test_standardized_over_many_groups(self, rng: np.random.Generator) -> None:
        for _ in range(200):
            g = int(rng.integers(2, 17))
            rewards = rng.normal(rng.uniform(-5.0, 5.0), rng.uniform(1e-3, 10.0), size=g)
            adv = group_advantages(rewards)
            assert adv.mean() == pytest.approx(0.0, abs=1e-10)
            assert adv.std() == pytest.approx(1.0, abs=1e-8)

    def test_reward_shift_leaves_advantages(self, rng: np.random.Generator) -> None:
        rewards = rng.normal(size=6)
        for shift in (-100.0, 0.37, 1e3):
            assert np.allclose(group_advantages(rewards + shift), group_advantages(rewards), atol=1e-9)

    def test_single_rollout(self) -> None:
        with pytest.raises(DomainError):
            group_advantages([1.0])


class TestCompositeReward:
    """Weighted reward terms and their prerequisites."""

    def test_total_reward(self) -> None:
        assert total_reward(0.1, 0.2, 0.3) == pytest.approx(0.6)
        assert total_reward(0.1, 0.2, 0.3, RewardWeights(pg=2.0, rf=0.0, vc=1.0)) == pytest.approx(0.5)

    def test_physics_needs_priors(self) -> None:
        with pytest.raises(PrerequisiteError):
            CompositeReward(RewardWeights(), scorers=[CeiqProxyScorer()])

    def test_non_default_weights_warn(self, caplog: pytest.LogCaptureFixture) -> None:
        with caplog.at_level(logging.WARNING):
            CompositeReward(RewardWeights(pg=0.0, rf=1.0, vc=0.0), scorers=[CeiqProxyScorer()])
        assert "Non-default reward weights" in caplog.text

    def test_ablated_term_still_reported(self, random_image: ImageTensor, rng: np.random.Generator) -> None:
        reward = CompositeReward(
            RewardWeights(pg=0.0, rf=1.0, vc=0.0),
            priors=PriorReference(mrg=0.3, mrb=0.5, mgb=0.2),
            scorers=[CeiqProxyScorer()],
        )
        pred = ImageTensor(rng.uniform(size=(4, 4, 3)))
        b = reward.evaluate(random_image, pred)
        assert b.physics is not None
        assert b.total == pytest.approx(b.r_rf)
        assert b.as_row()["q_ceiq_proxy"] == b.r_rf

    def test_group_batch(self, trajs: list[Trajectory], random_image: ImageTensor, quality_only: CompositeReward) -> None:
        batch = build_group_batch(random_image, trajs, quality_only)
        assert batch.G == 3
        assert np.allclose(batch.advantages, group_advantages(batch.totals))


# ============================== Ratios ======================================


class TestImportanceRatio:
    """Per-step and per-trajectory likelihood ratios."""

    def test_identity_ratio_is_one(self, model: DenoiserModel, trajs: list[Trajectory]) -> None:
        theta = model.params.theta
        assert trajectory_ratio(model, theta, theta, trajs[0]) == 1.0
        assert importance_ratio(model, theta, theta, trajs[0], 4) == 1.0

    def test_trajectory_ratio_from_log_densities(
        self, model: DenoiserModel, trajs: list[Trajectory], rng: np.random.Generator
    ) -> None:
        old = model.params.theta
        new = old + rng.normal(0.0, 1e-3, size=old.shape)
        expected = np.exp(trajectory_log_density(model, new, trajs[1]) - trajectory_log_density(model, old, trajs[1]))
        assert trajectory_ratio(model, new, old, trajs[1]) == pytest.approx(expected, rel=1e-9)

    def test_step_ratio_matches_time_index(
        self, model: DenoiserModel, trajs: list[Trajectory], rng: np.random.Generator
    ) -> None:
        old = model.params.theta
        new = old + rng.normal(0.0, 1e-3, size=old.shape)
        log_rho = step_log_ratios(model, new, old, trajs[0])
        for t in (1, 5, 10):
            k = trajs[0].num_steps - t
            assert importance_ratio(model, new, old, trajs[0], t) == pytest.approx(np.exp(log_rho[k]), rel=1e-9)

    def test_time_out_of_range(self, model: DenoiserModel, trajs: list[Trajectory]) -> None:
        with pytest.raises(DomainError):
            importance_ratio(model, model.params.theta, model.params.theta, trajs[0], 0)


# ============================== Surrogate ===================================


class TestClippedSurrogate:
    """min(rho*A, clip(rho)*A)."""

    def test_large_ratio_positive_advantage(self) -> None:
        assert clipped_surrogate([2.0], [1.0], 0.2) == pytest.approx(1.2)

    def test_small_ratio_negative_advantage(self) -> None:
        assert clipped_surrogate([0.5], [-1.0], 0.2) == pytest.approx(-0.8)

    def test_inside_clip_range(self) -> None:
        assert clipped_surrogate([1.1, 0.9], [1.0, -2.0], 0.2) == pytest.approx((1.1 - 1.8) / 2)

    def test_never_above_unclipped(self, rng: np.random.Generator) -> None:
        rho = np.exp(rng.normal(0.0, 0.5, size=2000))
        adv = rng.normal(size=2000)
        for eps in (0.05, 0.2, 0.5):
            terms = np.array([clipped_surrogate([r], [a], eps) for r, a in zip(rho, adv)])
            assert np.all(terms <= rho * adv + 1e-15)
            inside = np.abs(rho - 1.0) <= eps
            assert np.array_equal(terms[inside], rho[inside] * adv[inside])

    def test_invalid_clip(self) -> None:
        with pytest.raises(DomainError):
            clipped_surrogate([1.0], [1.0], 1.5)


# ============================== KL anchor ===================================


class TestKlPenalty:
    """Closed-form KL between equal-variance Gaussian steps."""

    def test_identical_parameters(self, model: DenoiserModel, trajs: list[Trajectory]) -> None:
        theta = model.params.theta
        assert kl_penalty(model, theta, theta, trajs) == 0.0

    def test_constant_mean_shift(self, model: DenoiserModel, schedule: NoiseSchedule, random_image: ImageTensor) -> None:
        sched = schedule.with_sigmas(0.1)
        trajs = sample_group(model, sched, random_image, 2, np.random.default_rng(3))
        d = np.linspace(-0.01, 0.02, model.state_dim)
        theta = model.params.theta
        expected = sched.T * float(d @ d) / (2.0 * 0.1**2)
        assert kl_penalty(model, shifted_b2(model, theta, d), theta, trajs) == pytest.approx(expected, rel=1e-9)


# ============================ Objective =====================================


class TestRpoObjective:
    """Objective value and analytic gradient."""

    def test_identity_gradient_is_advantage_weighted_score(
        self, model: DenoiserModel, trajs: list[Trajectory]
    ) -> None:
        theta = model.params.theta
        adv = np.array([1.0, -0.5, -0.5])
        res = rpo_objective_and_grad(model, theta, theta, theta, trajs, adv, 0.2, 0.0)
        expected = np.mean([a * trajectory_log_density_grad(model, theta, tr)[1] for a, tr in zip(adv, trajs)], axis=0)
        assert np.allclose(res.grad, expected, atol=1e-10)
        assert res.ratios == [1.0, 1.0, 1.0]
        assert res.clip_fraction == 0.0
        assert res.surrogate == pytest.approx(0.0, abs=1e-15)

    def test_clipped_trajectory_has_no_gradient(self, model: DenoiserModel, trajs: list[Trajectory]) -> None:
        traj = trajs[0]
        old = model.params.theta
        u = np.sum(traj.step_noises / traj.step_sigmas[:, None], axis=0)
        s = float(np.sum(1.0 / (2.0 * traj.step_sigmas**2)))
        new = shifted_b2(model, old, u / (2.0 * s))

        pos = rpo_objective_and_grad(model, new, old, old, [traj], [1.0], 0.2, 0.0)
        assert pos.ratios[0] > 1.2
        assert pos.clip_fraction == 1.0
        assert pos.surrogate == pytest.approx(1.2)
        assert np.all(pos.grad == 0.0)

        neg = rpo_objective_and_grad(model, new, old, old, [traj], [-1.0], 0.2, 0.0)
        assert neg.clip_fraction == 0.0
        assert np.any(neg.grad != 0.0)

    def test_mean_on_sampled_state_gates_by_advantage_sign(self, model: DenoiserModel, trajs: list[Trajectory]) -> None:
        traj = trajs[0]
        old = model.params.theta
        # Only the first reverse step is evaluated; its mean lands on the recorded next state
        stride = traj.num_steps
        new = shifted_b2(model, old, traj.step_sigmas[0] * traj.step_noises[0])
        expected_rho = np.exp(0.5 * float(traj.step_noises[0] @ traj.step_noises[0]))

        pos = rpo_objective_and_grad(model, new, old, old, [traj], [1.0], 0.2, 0.0, step_stride=stride)
        assert pos.ratios[0] == pytest.approx(expected_rho, rel=1e-8)
        assert pos.clip_fraction == 1.0
        assert pos.surrogate == pytest.approx(1.2)
        assert np.all(pos.grad == 0.0)

        neg = rpo_objective_and_grad(model, new, old, old, [traj], [-1.0], 0.2, 0.0, step_stride=stride)
        assert neg.clip_fraction == 0.0
        assert neg.surrogate == pytest.approx(-expected_rho, rel=1e-8)
        # The step density peaks at its own sample, so the active branch is stationary there
        assert np.allclose(neg.grad, 0.0, atol=1e-6 * expected_rho)

    def test_reward_shift_leaves_gradient(self, model: DenoiserModel, trajs: list[Trajectory], rng: np.random.Generator) -> None:
        old = model.params.theta
        theta = old + rng.normal(0.0, 1e-3, size=old.shape)
        rewards = np.array([0.2, -0.4, 0.9])
        grads = [
            rpo_objective_and_grad(model, theta, old, old, trajs, group_advantages(rewards + shift), 0.2, 0.01).grad
            for shift in (0.0, 5.0, -12.5)
        ]
        scale = np.abs(grads[0]).max()
        for g in grads[1:]:
            assert np.allclose(g, grads[0], rtol=1e-9, atol=1e-9 * scale)

    @pytest.mark.parametrize("mode", [RatioMode.TRAJECTORY, RatioMode.PER_STEP])
    def test_gradient_matches_finite_differences(
        self, mode: RatioMode, model: DenoiserModel, trajs: list[Trajectory], rng: np.random.Generator
    ) -> None:
        old = model.params.theta
        theta = old + rng.normal(0.0, 1e-5, size=old.shape)
        ref = old + rng.normal(0.0, 1e-3, size=old.shape)
        adv = np.array([0.7, -1.2, 0.5])

        def objective(th: np.ndarray) -> float:
            return rpo_objective_and_grad(model, th, old, ref, trajs, adv, 0.2, 0.1, mode).objective

        res = rpo_objective_and_grad(model, theta, old, ref, trajs, adv, 0.2, 0.1, mode)
        coords = rng.choice(model.layout.size, size=30, replace=False)
        assert np.allclose(res.grad[coords], finite_difference(objective, theta, coords), rtol=1e-4, atol=1e-6)

    def test_step_stride_counts_steps(self, model: DenoiserModel, trajs: list[Trajectory]) -> None:
        theta = model.params.theta
        res = rpo_objective_and_grad(model, theta, theta, theta, trajs, [1.0, 0.0, -1.0], 0.2, 0.0, step_stride=4)
        assert res.n_steps == 3 * 3

    def test_zero_noise_rollouts_rejected(
        self, model: DenoiserModel, schedule: NoiseSchedule, random_image: ImageTensor
    ) -> None:
        still = sample_group(model, schedule.with_sigmas(0.0), random_image, 2, np.random.default_rng(0))
        theta = model.params.theta
        with pytest.raises(NumericError):
            rpo_objective_and_grad(model, theta, theta, theta, still, [1.0, -1.0], 0.2, 0.0)

    def test_negative_kl_weight(self, model: DenoiserModel, trajs: list[Trajectory]) -> None:
        theta = model.params.theta
        with pytest.raises(DomainError):
            rpo_objective_and_grad(model, theta, theta, theta, trajs, [0.0, 0.0, 0.0], 0.2, -1.0)

"""
Linear-beta noise schedule and forward noising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import DimensionError, DomainError


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Per-step betas, cumulative alpha products and sampling scales.

    Arrays are indexed by ``t - 1`` for ``t = 1..T``. The sampling scale
    follows the fixed-variance rule ``sigma_t = sqrt(beta_t)`` unless
    overridden with ``with_sigmas``.
    """

    betas: np.ndarray
    alpha_bars: np.ndarray
    sigmas: np.ndarray

    @property
    def T(self) -> int:
        return int(self.betas.shape[0])

    def _check_t(self, t: int, allow_zero: bool = False) -> None:
        low = 0 if allow_zero else 1
        if not low <= t <= self.T:
            raise DomainError(f"Time step must lie in [{low}, {self.T}]", field="t", value=t)

    def beta(self, t: int) -> float:
        self._check_t(t)
        return float(self.betas[t - 1])

    def alpha_bar(self, t: int) -> float:
        """Cumulative product up to ``t``; ``alpha_bar(0) == 1``."""
        self._check_t(t, allow_zero=True)
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def sigma(self, t: int) -> float:
        self._check_t(t)
        return float(self.sigmas[t - 1])

    def posterior_coefs(self, t: int) -> tuple[float, float]:
        """
        Coefficients of the true posterior mean of q(x_{t-1} | x_t, x_0).

        Returns:
            (c0, ct) with mean = c0 * x_0 + ct * x_t
        """
        self._check_t(t)
        beta = self.beta(t)
        ab_t = self.alpha_bar(t)
        ab_prev = self.alpha_bar(t - 1)
        c0 = np.sqrt(ab_prev) * beta / (1.0 - ab_t)
        ct = np.sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab_t)
        return float(c0), float(ct)

    def with_sigmas(self, sigmas: np.ndarray | float) -> NoiseSchedule:
        """Copy with replaced sampling scales (e.g. zeros for deterministic rollouts)."""
        new = np.broadcast_to(np.asarray(sigmas, dtype=np.float64), self.betas.shape).copy()
        if np.any(new < 0.0):
            raise DomainError("Sampling scales must be non-negative")
        return NoiseSchedule(betas=self.betas, alpha_bars=self.alpha_bars, sigmas=new)

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "beta_min": float(self.betas[0]),
            "beta_max": float(self.betas[-1]),
        }


def make_schedule(T: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    """
    Linear beta interpolation from ``beta_min`` to ``beta_max`` over ``T`` steps.

    Raises:
        DomainError: If T < 1 or the bounds violate 0 < beta_min <= beta_max < 1
    """
    if T < 1:
        raise DomainError("Schedule needs at least one step", field="T", value=T)
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise DomainError(
            "Require 0 < beta_min <= beta_max < 1", field="beta", value=(beta_min, beta_max)
        )
    betas = np.linspace(beta_min, beta_max, T)
    alpha_bars = np.cumprod(1.0 - betas)
    return NoiseSchedule(betas=betas, alpha_bars=alpha_bars, sigmas=np.sqrt(betas))


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """
    ``x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps``.

    ``t = 0`` is accepted and returns ``x0`` (alpha_bar_0 = 1).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise DimensionError("State and noise shapes differ", expected=x0.shape, actual=eps.shape)
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps

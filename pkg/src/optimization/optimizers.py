"""
First-order update rules over flat parameter vectors.

Every optimizer minimizes: pass the gradient of a loss, or the negated
gradient of an objective to be maximized.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any

import numpy as np

from ..config.config_models import OptimizerType
from ..exceptions import DomainError, require_finite


class Optimizer(ABC):
    """Abstract base class for parameter update rules."""

    kind: OptimizerType

    def __init__(self, lr: float, weight_decay: float = 0.0):
        if lr <= 0.0:
            raise DomainError("Learning rate must be positive", field="lr", value=lr)
        if weight_decay < 0.0:
            raise DomainError("Weight decay must be non-negative", field="weight_decay", value=weight_decay)
        self.lr = lr
        self.weight_decay = weight_decay
        self.steps = 0

    @abstractmethod
    def _update(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return the updated parameter vector."""

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Apply one update; ``theta`` is not modified in place."""
        require_finite(grad, "gradient")
        self.steps += 1
        new = self._update(np.asarray(theta, dtype=np.float64), np.asarray(grad, dtype=np.float64))
        require_finite(new, "parameters")
        return new

    def reset(self) -> None:
        self.steps = 0

    def state_dict(self) -> dict[str, Any]:
        """JSON-compatible snapshot of the update state."""
        return {"kind": self.kind.value, "steps": self.steps}

    def load_state_dict(self, state: dict[str, Any]) -> None:
        """Restore a snapshot taken by ``state_dict``."""
        if state.get("kind") != self.kind.value:
            raise DomainError(
                "Optimizer state belongs to another update rule", field="kind", value=state.get("kind")
            )
        self.steps = int(state["steps"])


class SgdOptimizer(Optimizer):
    """Plain gradient descent with L2 weight decay."""

    kind = OptimizerType.SGD

    def _update(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return theta - self.lr * (grad + self.weight_decay * theta)


class AdamWOptimizer(Optimizer):
    """Adam with decoupled weight decay."""

    kind = OptimizerType.ADAMW

    def __init__(
        self,
        lr: float,
        weight_decay: float = 0.0,
        betas: tuple[float, float] = (0.9, 0.99),
        eps: float = 1e-8,
    ):
        super().__init__(lr, weight_decay)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None

    def _update(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None or self.m.shape != theta.shape:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.steps)
        v_hat = self.v / (1.0 - self.beta2**self.steps)
        decayed = theta * (1.0 - self.lr * self.weight_decay)
        return decayed - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def reset(self) -> None:
        super().reset()
        self.m = None
        self.v = None

    def state_dict(self) -> dict[str, Any]:
        state = super().state_dict()
        # Python floats round-trip through JSON exactly
        state["m"] = None if self.m is None else self.m.tolist()
        state["v"] = None if self.v is None else self.v.tolist()
        return state

    def load_state_dict(self, state: dict[str, Any]) -> None:
        super().load_state_dict(state)
        self.m = None if state.get("m") is None else np.asarray(state["m"], dtype=np.float64)
        self.v = None if state.get("v") is None else np.asarray(state["v"], dtype=np.float64)
        if (self.m is None) != (self.v is None) or (self.m is not None and self.m.shape != self.v.shape):
            raise DomainError("Optimizer moments are inconsistent", field="m/v")


def build_optimizer(kind: OptimizerType | str, lr: float, weight_decay: float = 0.0) -> Optimizer:
    """Optimizer by configuration name."""
    kind = OptimizerType(kind)
    if kind == OptimizerType.SGD:
        return SgdOptimizer(lr, weight_decay)
    return AdamWOptimizer(lr, weight_decay)

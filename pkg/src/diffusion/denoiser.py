"""
Tiny conditional denoiser with analytic gradients.

The network predicts the posterior mean directly:

    z  = [x_t, c, emb(t), v]
    h  = tanh(W1 z + b1)
    mu = W2 h + b2 + s_x * x_t + s_c * c

``s_x`` and ``s_c`` are per-element skip gains forming the affine-only path.
All parameters live in one flat vector so that old/reference snapshots are
plain array copies.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
import logging

import numpy as np

from ..config.config_models import DenoiserConfig
from ..exceptions import DimensionError, NumericError, require_finite

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParamLayout:
    """Names, shapes and offsets of the tensors packed into a flat vector."""

    names: tuple[str, ...]
    shapes: tuple[tuple[int, ...], ...]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(int(np.prod(s)) for s in self.shapes)

    @property
    def size(self) -> int:
        return sum(self.sizes)

    def offsets(self) -> dict[str, tuple[int, int]]:
        out = {}
        start = 0
        for name, size in zip(self.names, self.sizes):
            out[name] = (start, start + size)
            start += size
        return out

    def views(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        """Reshaped views into ``theta`` (writes go through to the vector)."""
        if theta.shape != (self.size,):
            raise DimensionError("Parameter vector size mismatch", expected=self.size, actual=theta.shape)
        return {
            name: theta[a:b].reshape(shape)
            for (name, (a, b)), shape in zip(self.offsets().items(), self.shapes)
        }


@dataclass
class PolicyParams:
    """Flat parameter vector plus its layout."""

    theta: np.ndarray
    layout: ParamLayout

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.layout.size,):
            raise DimensionError(
                "Parameter vector size mismatch", expected=self.layout.size, actual=self.theta.shape
            )
        require_finite(self.theta, "parameters")

    def copy(self) -> PolicyParams:
        """Detached snapshot (old/reference roles)."""
        return PolicyParams(theta=self.theta.copy(), layout=self.layout)

    def views(self) -> dict[str, np.ndarray]:
        return self.layout.views(self.theta)

    @property
    def size(self) -> int:
        return self.layout.size


@dataclass
class DenoiserInputs:
    """A batch of network inputs; row i is one (x_t, c, t, v) query."""

    x: np.ndarray
    cond: np.ndarray
    t: np.ndarray
    z: np.ndarray = field(repr=False)

    @property
    def batch(self) -> int:
        return int(self.x.shape[0])


@dataclass
class ForwardCache:
    inputs: DenoiserInputs
    h: np.ndarray


class DenoiserModel:
    """
    Two-layer affine-plus-tanh network over the concatenated inputs.

    The forward pass is a pure function of ``(theta, inputs)``; the model
    object only holds architecture and a default parameter vector.
    """

    def __init__(self, config: DenoiserConfig, state_dim: int, T: int, params: PolicyParams | None = None):
        """
        Initialize the denoiser.

        Args:
            config: Architecture configuration
            state_dim: Flattened image size (H*W*3)
            T: Number of diffusion steps (time embedding scale)
            params: Existing parameters; freshly initialized when omitted
        """
        self.config = config
        self.state_dim = int(state_dim)
        self.T = int(T)
        self.hidden = config.hidden
        self.time_dim = config.time_embed_dim
        self.concept_dim = config.concept_dim
        self.input_dim = 2 * self.state_dim + self.time_dim + self.concept_dim
        self.layout = ParamLayout(
            names=("W1", "b1", "W2", "b2", "s_x", "s_c"),
            shapes=(
                (self.hidden, self.input_dim),
                (self.hidden,),
                (self.state_dim, self.hidden),
                (self.state_dim,),
                (self.state_dim,),
                (self.state_dim,),
            ),
        )
        self.params = params if params is not None else self.init_params(config.seed)
        if self.params.layout != self.layout:
            raise DimensionError("Parameters do not match the architecture")

    def init_params(self, seed: int) -> PolicyParams:
        """Small Gaussian weights, zero biases, ``s_x = 0`` and ``s_c = 1``."""
        rng = np.random.default_rng(seed)
        theta = np.zeros(self.layout.size)
        v = self.layout.views(theta)
        scale = self.config.init_scale
        v["W1"][...] = rng.normal(0.0, scale, size=v["W1"].shape)
        v["W2"][...] = rng.normal(0.0, scale, size=v["W2"].shape)
        v["s_c"][...] = 1.0
        logger.debug(f"Initialized denoiser with {self.layout.size} parameters")
        return PolicyParams(theta=theta, layout=self.layout)

    def zero_params(self) -> PolicyParams:
        return PolicyParams(theta=np.zeros(self.layout.size), layout=self.layout)

    def time_embedding(self, t: np.ndarray) -> np.ndarray:
        """Sinusoidal embedding of integer steps, shape (B, time_dim)."""
        t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
        half = self.time_dim // 2
        freqs = np.exp(-np.log(10000.0) * np.arange(half) / half).reshape(1, -1)
        arg = t * freqs
        return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)

    def build_inputs(
        self,
        x: np.ndarray,
        cond: np.ndarray,
        t: np.ndarray | int,
        concept: np.ndarray | None = None,
    ) -> DenoiserInputs:
        """
        Assemble a batch of inputs.

        Args:
            x: Noisy states, shape (B, D) or (D,)
            cond: Conditioning image(s), shape (D,) or (B, D)
            t: Step index per row (or one int for all rows)
            concept: Concept vector (concept_dim,), zeros when omitted
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        batch = x.shape[0]
        if x.shape[1] != self.state_dim:
            raise DimensionError("State size mismatch", expected=self.state_dim, actual=x.shape[1])
        cond = np.asarray(cond, dtype=np.float64)
        cond = np.broadcast_to(cond, (batch, self.state_dim)) if cond.ndim == 1 else cond
        if cond.shape != (batch, self.state_dim):
            raise DimensionError("Condition size mismatch", expected=(batch, self.state_dim), actual=cond.shape)
        t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (batch,))
        parts = [x, cond, self.time_embedding(t_arr)]
        if self.concept_dim:
            if concept is None:
                v = np.zeros(self.concept_dim)
            else:
                v = np.asarray(concept, dtype=np.float64).reshape(-1)
                if v.shape != (self.concept_dim,):
                    raise DimensionError(
                        "Concept vector size mismatch", expected=self.concept_dim, actual=v.shape
                    )
            parts.append(np.broadcast_to(v, (batch, self.concept_dim)))
        z = np.concatenate(parts, axis=1)
        require_finite(z, "denoiser inputs")
        return DenoiserInputs(x=x, cond=np.ascontiguousarray(cond), t=t_arr.copy(), z=z)

    def forward(self, theta: np.ndarray, inputs: DenoiserInputs) -> tuple[np.ndarray, ForwardCache]:
        """Predicted posterior means, shape (B, D), plus the backward cache."""
        p = self.layout.views(theta)
        h = np.tanh(inputs.z @ p["W1"].T + p["b1"])
        out = h @ p["W2"].T + p["b2"] + p["s_x"] * inputs.x + p["s_c"] * inputs.cond
        if not np.all(np.isfinite(out)):
            raise NumericError("Non-finite denoiser output", quantity="mu")
        return out, ForwardCache(inputs=inputs, h=h)

    def mean(self, theta: np.ndarray, inputs: DenoiserInputs) -> np.ndarray:
        return self.forward(theta, inputs)[0]

    def backward(self, theta: np.ndarray, cache: ForwardCache, out_grad: np.ndarray) -> np.ndarray:
        """
        Gradient w.r.t. ``theta`` of ``sum(out_grad * out)``.

        Contributions of all batch rows are accumulated.
        """
        p = self.layout.views(theta)
        g_out = np.asarray(out_grad, dtype=np.float64)
        if g_out.shape != (cache.inputs.batch, self.state_dim):
            raise DimensionError(
                "Output gradient shape mismatch",
                expected=(cache.inputs.batch, self.state_dim),
                actual=g_out.shape,
            )
        grad = np.zeros(self.layout.size)
        g = self.layout.views(grad)
        h = cache.h
        g["W2"][...] = g_out.T @ h
        g["b2"][...] = g_out.sum(axis=0)
        g["s_x"][...] = (g_out * cache.inputs.x).sum(axis=0)
        g["s_c"][...] = (g_out * cache.inputs.cond).sum(axis=0)
        g_pre = (g_out @ p["W2"]) * (1.0 - h * h)
        g["W1"][...] = g_pre.T @ cache.inputs.z
        g["b1"][...] = g_pre.sum(axis=0)
        if not np.all(np.isfinite(grad)):
            raise NumericError("Non-finite denoiser gradient", quantity="grad")
        return grad

    def forward_and_grad(
        self,
        theta: np.ndarray,
        inputs: DenoiserInputs,
        out_grad: np.ndarray | Callable[[np.ndarray], np.ndarray],
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        Forward pass and parameter gradient of a scalar of the output.

        Args:
            theta: Parameter vector
            inputs: Input batch
            out_grad: d(scalar)/d(out), or a callable mapping the output to it

        Returns:
            (output, gradient)
        """
        out, cache = self.forward(theta, inputs)
        g_out = out_grad(out) if callable(out_grad) else out_grad
        return out, self.backward(theta, cache, g_out)

    def describe(self) -> dict:
        return {
            "denoiser": self.config.model_dump(mode="json"),
            "state_dim": self.state_dim,
            "T": self.T,
            "param_count": self.layout.size,
        }

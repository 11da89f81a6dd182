"""
Image representation and per-channel statistics.

Images are carried as channel-interleaved ``(H, W, 3)`` float64 arrays of
unit-interval intensities. Every reward and evaluation path reads images
through the statistics defined here.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Sequence

import numpy as np

from ..exceptions import DimensionError, DomainError

logger = logging.getLogger(__name__)

PSNR_CAP_DB = 99.0
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
CHANNELS = ("R", "G", "B")


def clamp_unit(arr: np.ndarray) -> np.ndarray:
    """Clamp intensities to [0, 1]."""
    return np.clip(arr, 0.0, 1.0)


@dataclass(frozen=True)
class ImageTensor:
    """
    H×W×3 image of unit-interval intensities.

    ``data`` is row-major and channel-interleaved; ``data[y, x, c]`` is the
    intensity of channel ``c`` (R, G, B) at row ``y`` and column ``x``.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DimensionError(
                "Image must have shape (H, W, 3)", expected="(H, W, 3)", actual=arr.shape
            )
        if arr.shape[0] < 2 or arr.shape[1] < 2:
            raise DimensionError(
                "Image must be at least 2x2", expected="H>=2, W>=2", actual=arr.shape
            )
        if not np.all(np.isfinite(arr)):
            raise DomainError("Image contains non-finite intensities")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise DomainError(
                "Image intensities must lie in [0, 1]",
                value=(float(arr.min()), float(arr.max())),
            )
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr: np.ndarray, clamp: bool = False) -> ImageTensor:
        """Build an image from an array, optionally clamping to [0, 1] first."""
        arr = np.asarray(arr, dtype=np.float64)
        if clamp:
            arr = clamp_unit(arr)
        return cls(arr)

    @classmethod
    def from_flat(cls, vec: np.ndarray, height: int, width: int, clamp: bool = True) -> ImageTensor:
        """Rebuild an image from a flattened state vector."""
        return cls.from_array(np.asarray(vec).reshape(height, width, 3), clamp=clamp)

    @classmethod
    def constant(cls, height: int, width: int, rgb: Sequence[float]) -> ImageTensor:
        """Uniformly coloured image."""
        return cls(np.broadcast_to(np.asarray(rgb, dtype=np.float64), (height, width, 3)).copy())

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, 3)

    def flat(self) -> np.ndarray:
        """Flattened (H*W*3,) copy used as a diffusion state vector."""
        return self.data.reshape(-1).copy()

    def channel(self, index: int) -> np.ndarray:
        return self.data[:, :, index]

    def transpose(self) -> ImageTensor:
        """Swap rows and columns."""
        return ImageTensor(np.transpose(self.data, (1, 0, 2)).copy())


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean, population standard deviation and mean gradient magnitude."""

    mu: np.ndarray
    sigma: np.ndarray
    grad: np.ndarray

    def as_dict(self) -> dict[str, float]:
        out = {}
        for i, name in enumerate(CHANNELS):
            out[f"mu_{name}"] = float(self.mu[i])
            out[f"sigma_{name}"] = float(self.sigma[i])
            out[f"grad_{name}"] = float(self.grad[i])
        return out


def _require_same_shape(a: ImageTensor, b: ImageTensor) -> None:
    if a.shape != b.shape:
        raise DimensionError("Image dimensions differ", expected=a.shape, actual=b.shape)


def gradient_magnitude(channel: np.ndarray) -> np.ndarray:
    """
    Per-pixel L2 gradient magnitude of a 2-D field.

    Forward differences with replicate boundary: the difference past the last
    row/column is zero.
    """
    padded_x = np.concatenate([channel, channel[:, -1:]], axis=1)
    padded_y = np.concatenate([channel, channel[-1:, :]], axis=0)
    dx = np.diff(padded_x, axis=1)
    dy = np.diff(padded_y, axis=0)
    return np.sqrt(dx * dx + dy * dy)


def channel_stats(img: ImageTensor) -> ChannelStats:
    """Mean, population std and mean gradient magnitude for each of R, G, B."""
    data = img.data
    mu = data.mean(axis=(0, 1))
    sigma = data.std(axis=(0, 1))
    grad = np.array([gradient_magnitude(data[:, :, c]).mean() for c in range(3)])
    return ChannelStats(mu=mu, sigma=sigma, grad=grad)


def luminance(img: ImageTensor) -> np.ndarray:
    """Rec. 601 luma plane, 0.299R + 0.587G + 0.114B."""
    return img.data @ LUMA_WEIGHTS


def percentile(values: Sequence[float], p: float) -> float:
    """
    Linear-interpolation percentile of a sample (inclusive convention).

    Args:
        values: Non-empty sample
        p: Percentile in [0, 100]

    Returns:
        Interpolated order statistic; p=100 is the maximum, p=0 the minimum
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DomainError("Percentile of an empty sample", field="values")
    if not 0.0 <= p <= 100.0:
        raise DomainError("Percentile must lie in [0, 100]", field="p", value=p)
    return float(np.percentile(arr, p, method="linear"))


def mse(a: ImageTensor, b: ImageTensor) -> float:
    _require_same_shape(a, b)
    diff = a.data - b.data
    return float(np.mean(diff * diff))


def psnr(a: ImageTensor, b: ImageTensor) -> float:
    """
    Peak signal-to-noise ratio with peak 1.0.

    Identical images report ``PSNR_CAP_DB`` instead of infinity; finite values
    above the cap are capped as well.
    """
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / err))

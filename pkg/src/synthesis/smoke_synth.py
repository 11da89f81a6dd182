"""
Synthetic smoky/clean corpus generation.

Clean patches are procedural tissue-like textures; smoke is added with the
atmospheric scattering model ``I = J*t + A*(1 - t)`` under a smooth random
transmission field. Every sample derives its own RNG stream from
``(seed, index)``, so corpus generation is a pure function of its inputs and
can be spread over worker threads without changing the result.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import hashlib
import logging

import numpy as np

from ..config.config_models import SmokeConfig
from ..exceptions import DimensionError, DomainError
from ..imaging.image_core import ImageTensor, clamp_unit

logger = logging.getLogger(__name__)

TRANSMISSION_FLOOR = 1e-6

CleanSource = Callable[[int, np.random.Generator, int, int], ImageTensor]


@dataclass(frozen=True)
class DensityModes:
    """Random low-frequency cosine modes of a density field."""

    amplitudes: np.ndarray
    periods: np.ndarray
    angles: np.ndarray
    phases: np.ndarray


@dataclass
class PairedSample:
    """A clean patch, its smoky rendering and the transmission that produced it."""

    clean: ImageTensor
    smoky: ImageTensor
    transmission: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.clean.shape != self.smoky.shape:
            raise DimensionError(
                "Clean and smoky patches differ in size",
                expected=self.clean.shape,
                actual=self.smoky.shape,
            )
        if self.transmission is not None:
            if self.transmission.shape != self.clean.shape[:2]:
                raise DimensionError(
                    "Transmission map size mismatch",
                    expected=self.clean.shape[:2],
                    actual=self.transmission.shape,
                )
            if np.any(self.transmission <= 0.0) or np.any(self.transmission > 1.0):
                raise DomainError("Transmission must lie in (0, 1]")


def _check_dims(h: int, w: int) -> None:
    if h < 2 or w < 2:
        raise DimensionError("Patch must be at least 2x2", expected="h,w>=2", actual=(h, w))


def draw_density_modes(cfg: SmokeConfig, rng: np.random.Generator) -> DensityModes:
    """Draw the cosine modes of the density field; periods scale with smoothness."""
    n = cfg.n_modes
    return DensityModes(
        amplitudes=rng.uniform(0.5, 1.0, size=n),
        periods=cfg.smoothness * rng.uniform(1.0, 3.0, size=n),
        angles=rng.uniform(0.0, 2.0 * np.pi, size=n),
        phases=rng.uniform(0.0, 2.0 * np.pi, size=n),
    )


def evaluate_density(modes: DensityModes, h: int, w: int) -> np.ndarray:
    """
    Normalized mode sum in [0, 1].

    f(y, x) = sum_k a_k * (1 + cos(2*pi*(x*cos(th_k) + y*sin(th_k))/p_k + phi_k)) / 2
              / sum_k a_k
    """
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    field = np.zeros((h, w))
    for a, p, th, ph in zip(modes.amplitudes, modes.periods, modes.angles, modes.phases):
        arg = 2.0 * np.pi * (xx * np.cos(th) + yy * np.sin(th)) / p + ph
        field += a * 0.5 * (1.0 + np.cos(arg))
    return field / modes.amplitudes.sum()


def synth_transmission(
    cfg: SmokeConfig, h: int, w: int, rng: np.random.Generator | None = None
) -> np.ndarray:
    """
    Transmission map ``t = exp(-density * f)`` in [TRANSMISSION_FLOOR, 1].

    Without an explicit ``rng`` the modes are drawn from ``cfg.seed``.
    """
    _check_dims(h, w)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    modes = draw_density_modes(cfg, rng)
    return np.maximum(np.exp(-cfg.density * evaluate_density(modes, h, w)), TRANSMISSION_FLOOR)


def apply_smoke(
    clean: ImageTensor, t: np.ndarray, airlight: Sequence[float]
) -> ImageTensor:
    """Per pixel and channel ``I = J*t + A*(1 - t)``, clamped to [0, 1]."""
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (clean.height, clean.width):
        raise DimensionError(
            "Transmission map size mismatch",
            expected=(clean.height, clean.width),
            actual=t.shape,
        )
    a = np.asarray(airlight, dtype=np.float64).reshape(1, 1, 3)
    t3 = t[:, :, None]
    return ImageTensor(clamp_unit(clean.data * t3 + a * (1.0 - t3)))


def tissue_texture(index: int, rng: np.random.Generator, h: int, w: int) -> ImageTensor:
    """
    Procedural tissue-like patch.

    A reddish base colour with smooth per-channel variation and two to four
    dark vessel-like sinusoidal curves.
    """
    _check_dims(h, w)
    base = np.array(
        [rng.uniform(0.55, 0.85), rng.uniform(0.2, 0.45), rng.uniform(0.15, 0.4)]
    )
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.broadcast_to(base, (h, w, 3)).copy()

    for c in range(3):
        for _ in range(3):
            period = rng.uniform(0.5, 2.0) * max(h, w)
            angle = rng.uniform(0.0, 2.0 * np.pi)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.02, 0.08)
            img[:, :, c] += amp * np.cos(
                2.0 * np.pi * (xx * np.cos(angle) + yy * np.sin(angle)) / period + phase
            )

    n_vessels = int(rng.integers(2, 5))
    for _ in range(n_vessels):
        horizontal = bool(rng.integers(0, 2))
        along, across = (xx, yy) if horizontal else (yy, xx)
        extent = h if horizontal else w
        center = rng.uniform(0.15, 0.85) * extent
        wiggle = rng.uniform(0.5, 2.5)
        period = rng.uniform(0.6, 1.5) * max(h, w)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        width = rng.uniform(0.6, 1.4)
        depth = rng.uniform(0.35, 0.6)
        dist = across - (center + wiggle * np.sin(2.0 * np.pi * along / period + phase))
        profile = depth * np.exp(-(dist * dist) / (2.0 * width * width))
        # Vessels darken green and blue more than red
        img *= (1.0 - profile[:, :, None] * np.array([0.6, 1.0, 0.9]))

    return ImageTensor(clamp_unit(img))


def sample_streams(seed: int, index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (texture, smoke) generators for sample ``index``."""
    tex_ss, smoke_ss = np.random.SeedSequence([seed, index]).spawn(2)
    return np.random.default_rng(tex_ss), np.random.default_rng(smoke_ss)


def make_sample(
    cfg: SmokeConfig, index: int, h: int, w: int, clean_source: CleanSource | None = None
) -> PairedSample:
    """Build sample ``index`` from its own RNG streams."""
    source = clean_source or tissue_texture
    tex_rng, smoke_rng = sample_streams(cfg.seed, index)
    clean = source(index, tex_rng, h, w)

    density = cfg.density
    if cfg.density_jitter > 0.0:
        density *= 1.0 + smoke_rng.uniform(-cfg.density_jitter, cfg.density_jitter)
    airlight = np.asarray(cfg.airlight, dtype=np.float64)
    if cfg.airlight_jitter > 0.0:
        airlight = np.clip(
            airlight + smoke_rng.uniform(-cfg.airlight_jitter, cfg.airlight_jitter), 0.0, 1.0
        )

    sample_cfg = cfg.model_copy(update={"density": max(0.0, density)})
    t = synth_transmission(sample_cfg, h, w, rng=smoke_rng)
    return PairedSample(clean=clean, smoky=apply_smoke(clean, t, airlight), transmission=t)


def gen_corpus(
    cfg: SmokeConfig,
    n: int,
    h: int,
    w: int,
    clean_source: CleanSource | None = None,
    workers: int = 1,
) -> list[PairedSample]:
    """
    Generate ``n`` paired samples, deterministic given ``cfg.seed``.

    Args:
        cfg: Smoke parameters
        n: Number of samples (>= 1)
        h, w: Patch size
        clean_source: Callable (index, rng, h, w) -> ImageTensor; defaults to tissue textures
        workers: Thread count; the result does not depend on it
    """
    if n < 1:
        raise DomainError("Corpus needs at least one sample", field="n", value=n)
    _check_dims(h, w)

    def build(i: int) -> PairedSample:
        return make_sample(cfg, i, h, w, clean_source)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(build, range(n)))
    else:
        samples = [build(i) for i in range(n)]

    logger.info(f"Generated {n} smoky/clean pairs ({h}x{w}, density {cfg.density})")
    return samples


def split_indices(n: int, train_ratio: float) -> tuple[list[int], list[int]]:
    """Leading ``round(n * train_ratio)`` indices train (at least one), the rest validate."""
    n_train = min(n, max(1, round(n * train_ratio)))
    return list(range(n_train)), list(range(n_train, n))


def corpus_hash(samples: Sequence[PairedSample]) -> str:
    """SHA-256 over clean, smoky and transmission data of every sample."""
    digest = hashlib.sha256()
    for s in samples:
        digest.update(np.ascontiguousarray(s.clean.data, dtype="<f8").tobytes())
        digest.update(np.ascontiguousarray(s.smoky.data, dtype="<f8").tobytes())
        if s.transmission is not None:
            digest.update(np.ascontiguousarray(s.transmission, dtype="<f8").tobytes())
    return digest.hexdigest()

"""
Reference-free quality scorers.

The quality reward sums the outputs of a list of scorers. The built-in
``CeiqProxyScorer`` is an analytic contrast/entropy measure; learned
scorers are represented by slots that read precomputed scores from a
``path,score`` CSV sidecar.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
import csv
from dataclasses import dataclass
import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from ..config.config_models import QualityConfig
from ..exceptions import DomainError, PrerequisiteError, ScorerError, SmokeRpoError
from ..imaging.image_core import ImageTensor, luminance

logger = logging.getLogger(__name__)

N_BINS = 256
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def luminance_levels(img: ImageTensor) -> np.ndarray:
    """256-level bin index ``round(255 * L)`` of every pixel."""
    return np.clip(np.rint(luminance(img) * (N_BINS - 1)), 0, N_BINS - 1).astype(np.int64)


def luminance_entropy(img: ImageTensor) -> float:
    """Shannon entropy in bits of the 256-bin luminance histogram."""
    hist = np.bincount(luminance_levels(img).ravel(), minlength=N_BINS)
    p = hist[hist > 0] / hist.sum()
    return float(-(p * np.log2(p)).sum())


def equalize_luminance(img: ImageTensor) -> np.ndarray:
    """
    Histogram-equalized luminance in [0, 1].

    ``eq = (cdf[level] - cdf_min) / (N - cdf_min)``; a single-level image has
    nothing to spread and is returned unchanged.
    """
    lum = luminance(img)
    levels = luminance_levels(img)
    n = levels.size
    cdf = np.cumsum(np.bincount(levels.ravel(), minlength=N_BINS))
    cdf_min = cdf[cdf > 0][0]
    if cdf_min == n:
        return lum
    return (cdf[levels] - cdf_min) / (n - cdf_min)


def global_ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Single-window structural similarity over the whole plane (data range 1)."""
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(), y.var()
    cov = ((x - mx) * (y - my)).mean()
    num = (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
    return float(num / den)


def ceiq_proxy(img: ImageTensor, w_sim: float = 0.5, w_ent: float = 0.5) -> float:
    """
    Contrast/entropy quality proxy in [0, 1].

    ``w_sim * SSIM(L, equalize(L)) + w_ent * entropy(L) / 8``. Equalization is
    monotone in luminance, so the similarity term is non-negative.
    """
    sim = global_ssim(luminance(img), equalize_luminance(img))
    return w_sim * sim + w_ent * luminance_entropy(img) / 8.0


class QualityScorer(ABC):
    """
    Abstract base class for single-image quality scorers.

    Higher scores are better. Scorers must be deterministic.
    """

    scorer_id: str = "base"
    output_range: tuple[float, float] = (-math.inf, math.inf)

    @abstractmethod
    def score(self, img: ImageTensor, key: str | None = None) -> float:
        """
        Score one image.

        Args:
            img: Image to score
            key: Corpus-relative path, used by table-backed scorers
        """

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(id={self.scorer_id!r})"


class CeiqProxyScorer(QualityScorer):
    """Analytic stand-in for the CEIQ slot."""

    scorer_id = "ceiq_proxy"
    output_range = (0.0, 1.0)

    def score(self, img: ImageTensor, key: str | None = None) -> float:
        return ceiq_proxy(img)


def read_score_table(path: str | Path) -> dict[str, float]:
    """Read a ``path,score`` CSV (header optional)."""
    path = Path(path)
    if not path.exists():
        raise PrerequisiteError("External score table not found", missing=str(path))
    table: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.reader(f):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise ScorerError(f"Malformed score row: {row}", scorer_id="external", path=str(path))
            try:
                table[row[0].strip()] = float(row[1])
            except ValueError:
                if row[0].strip() == "path":
                    continue
                raise ScorerError(f"Non-numeric score: {row}", scorer_id="external", path=str(path)) from None
    return table


class ExternalScoreScorer(QualityScorer):
    """Looks scores up by exact corpus-relative path."""

    def __init__(self, table: dict[str, float], scorer_id: str = "external"):
        self.table = table
        self.scorer_id = scorer_id

    @classmethod
    def from_csv(cls, path: str | Path, scorer_id: str = "external") -> ExternalScoreScorer:
        return cls(read_score_table(path), scorer_id=scorer_id)

    def score(self, img: ImageTensor, key: str | None = None) -> float:
        if key is None:
            raise ScorerError("Table-backed scorer needs an image path", scorer_id=self.scorer_id)
        if key not in self.table:
            raise ScorerError("No external score for image", scorer_id=self.scorer_id, path=key)
        return self.table[key]


class LiqeSlotScorer(ExternalScoreScorer):
    """
    Slot for a learned language-image quality evaluator.

    There is no analytic substitute; when enabled it serves scores from the
    external table and otherwise refuses to score.
    """

    def __init__(self, table: dict[str, float] | None = None):
        super().__init__(table or {}, scorer_id="liqe")
        self.enabled = table is not None

    def score(self, img: ImageTensor, key: str | None = None) -> float:
        if not self.enabled:
            raise ScorerError("LIQE slot is disabled (no external score table)", scorer_id=self.scorer_id)
        return super().score(img, key)


class AffineNormalizedScorer(QualityScorer):
    """``scale * inner(img) + offset``."""

    def __init__(self, inner: QualityScorer, scale: float = 1.0, offset: float = 0.0):
        self.inner = inner
        self.scale = scale
        self.offset = offset
        self.scorer_id = inner.scorer_id
        lo, hi = (scale * v + offset for v in inner.output_range)
        self.output_range = (min(lo, hi), max(lo, hi))

    def score(self, img: ImageTensor, key: str | None = None) -> float:
        return self.scale * self.inner.score(img, key) + self.offset


def build_scorers(cfg: QualityConfig) -> list[QualityScorer]:
    """Instantiate the configured scorers with their normalization."""
    table = read_score_table(cfg.external_scores_csv) if cfg.external_scores_csv else None
    scorers: list[QualityScorer] = []
    for scorer_id in cfg.scorers:
        if scorer_id == "ceiq_proxy":
            scorer: QualityScorer = CeiqProxyScorer()
        elif scorer_id == "external":
            if table is None:
                raise PrerequisiteError("External scorer needs quality.external_scores_csv", missing="external_scores_csv")
            scorer = ExternalScoreScorer(table)
        elif scorer_id == "liqe":
            if not cfg.liqe_enabled:
                logger.warning("LIQE slot listed but disabled; skipping")
                continue
            if table is None:
                raise PrerequisiteError("LIQE slot needs quality.external_scores_csv", missing="external_scores_csv")
            scorer = LiqeSlotScorer(table)
        else:
            raise DomainError("Unknown scorer", field="scorer", value=scorer_id)

        norm = cfg.normalization.get(scorer_id)
        if norm is not None and (norm.scale != 1.0 or norm.offset != 0.0):
            scorer = AffineNormalizedScorer(scorer, norm.scale, norm.offset)
        scorers.append(scorer)
    logger.debug(f"Quality scorers: {scorers}")
    return scorers


@dataclass(frozen=True)
class QualityResult:
    total: float
    breakdown: dict[str, float]


def reward_quality(img: ImageTensor, scorers: Sequence[QualityScorer], key: str | None = None) -> QualityResult:
    """
    Sum of scorer outputs with the per-scorer breakdown.

    Raises:
        DomainError: If no scorer is given
        ScorerError: If a scorer fails or returns a non-finite value
    """
    if not scorers:
        raise DomainError("Quality reward needs at least one scorer", field="scorers")
    breakdown: dict[str, float] = {}
    for scorer in scorers:
        try:
            value = float(scorer.score(img, key))
        except ScorerError:
            raise
        except SmokeRpoError as e:
            raise ScorerError(f"Scorer failed: {e.message}", scorer_id=scorer.scorer_id) from e
        if not math.isfinite(value):
            raise ScorerError("Scorer returned a non-finite value", scorer_id=scorer.scorer_id)
        breakdown[scorer.scorer_id] = breakdown.get(scorer.scorer_id, 0.0) + value
    return QualityResult(total=float(sum(breakdown.values())), breakdown=breakdown)

"""
Concept-embedding semantic reward.

A frozen embedding provider maps images to unit vectors. Two learnable
concept vectors, "clear" (``v_pos``) and "smoky" (``v_neg``), are fitted so
that clean images align with ``v_pos`` and smoky ones with ``v_neg``. A
restoration is then rewarded with its two-class softmax log-probability of
being "clear".
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
import json
import logging
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..config.config_models import ConceptsConfig, ProviderType
from ..exceptions import (
    CorpusError,
    DimensionError,
    DomainError,
    PrerequisiteError,
    require_finite,
)
from ..imaging.image_core import ImageTensor, luminance
from ..synthesis.smoke_synth import PairedSample

logger = logging.getLogger(__name__)

_UNIT_TOL = 1e-9


def _unit(v: np.ndarray, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm == 0.0:
        raise DomainError("Cannot normalize a zero or non-finite vector", field=name)
    return v / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; zero-norm inputs raise DomainError."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError("Vector sizes differ", expected=a.shape, actual=b.shape)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DomainError("Cosine of a zero-norm vector")
    return float(a @ b / (na * nb))


class EmbeddingProvider(ABC):
    """
    Abstract base class for frozen image encoders.

    Implementations return unit-norm vectors of a fixed dimension and must be
    deterministic.
    """

    def __init__(self, dim: int):
        self.dim = dim

    @property
    @abstractmethod
    def provider_id(self) -> str:
        """Stable identifier recorded next to learned concepts."""

    @abstractmethod
    def embed(self, img: ImageTensor, key: str | None = None) -> np.ndarray:
        """
        Embed one image.

        Args:
            img: Image to embed
            key: Corpus-relative path, used by providers that look vectors up

        Returns:
            Unit-norm vector of length ``dim``
        """

    def embed_many(self, images: Sequence[ImageTensor], keys: Sequence[str] | None = None) -> np.ndarray:
        keys = keys if keys is not None else [None] * len(images)
        return np.array([self.embed(img, k) for img, k in zip(images, keys)])


class HistogramProjectionProvider(EmbeddingProvider):
    """
    Colour and gradient-orientation histograms under a fixed random projection.

    Features are 32-bin per-channel intensity histograms plus a gradient
    orientation histogram weighted by magnitude, each centred on the uniform
    histogram. Smoke compresses the colour histograms toward the airlight,
    so smoky and clean patches separate along a few projected directions.
    """

    def __init__(self, dim: int = 64, hist_bins: int = 32, orient_bins: int = 8, seed: int = 0):
        super().__init__(dim)
        self.hist_bins = hist_bins
        self.orient_bins = orient_bins
        self.seed = seed
        feat_dim = 3 * hist_bins + orient_bins
        rng = np.random.default_rng(seed)
        self.projection = rng.standard_normal((dim, feat_dim)) / np.sqrt(feat_dim)

    @property
    def provider_id(self) -> str:
        return f"histproj-v1:d{self.dim}:b{self.hist_bins}:o{self.orient_bins}:s{self.seed}"

    def features(self, img: ImageTensor) -> np.ndarray:
        n_pix = img.height * img.width
        hists = []
        for c in range(3):
            h, _ = np.histogram(img.channel(c), bins=self.hist_bins, range=(0.0, 1.0))
            hists.append(h / n_pix - 1.0 / self.hist_bins)

        lum = luminance(img)
        dx = np.diff(np.concatenate([lum, lum[:, -1:]], axis=1), axis=1)
        dy = np.diff(np.concatenate([lum, lum[-1:, :]], axis=0), axis=0)
        mag = np.sqrt(dx * dx + dy * dy)
        angle = np.arctan2(dy, dx)
        orient, _ = np.histogram(angle, bins=self.orient_bins, range=(-np.pi, np.pi), weights=mag)
        total = orient.sum()
        orient = orient / total if total > 0.0 else np.full(self.orient_bins, 1.0 / self.orient_bins)
        hists.append(orient - 1.0 / self.orient_bins)
        return np.concatenate(hists)

    def embed(self, img: ImageTensor, key: str | None = None) -> np.ndarray:
        e = self.projection @ self.features(img)
        norm = np.linalg.norm(e)
        if norm == 0.0:
            # uniform histograms project to the origin
            e = self.projection[:, 0]
            norm = np.linalg.norm(e)
        return e / norm


class PrecomputedEmbeddingProvider(EmbeddingProvider):
    """Looks vectors up in a JSON table ``{path: vector}`` produced elsewhere."""

    def __init__(self, table: dict[str, Sequence[float]], source: str = "memory"):
        if not table:
            raise CorpusError("Embedding table is empty", path=source)
        vectors = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        dims = {v.shape for v in vectors.values()}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise DimensionError("Embedding vectors must share one dimension", actual=sorted(dims))
        super().__init__(int(next(iter(dims))[0]))
        self.vectors = {k: _unit(v, k) for k, v in vectors.items()}
        self.source = source

    @classmethod
    def from_file(cls, path: str | Path) -> PrecomputedEmbeddingProvider:
        path = Path(path)
        if not path.exists():
            raise PrerequisiteError("Embedding table not found", missing=str(path))
        with open(path, encoding="utf-8") as f:
            return cls(json.load(f), source=str(path))

    @property
    def provider_id(self) -> str:
        return f"precomputed:{Path(self.source).name}:d{self.dim}"

    def embed(self, img: ImageTensor, key: str | None = None) -> np.ndarray:
        if key is None or key not in self.vectors:
            raise PrerequisiteError("No precomputed embedding for image", missing=str(key))
        return self.vectors[key]


def build_provider(cfg: ConceptsConfig) -> EmbeddingProvider:
    """Provider selected by configuration."""
    if cfg.provider == ProviderType.PRECOMPUTED:
        provider: EmbeddingProvider = PrecomputedEmbeddingProvider.from_file(cfg.embeddings_path)
        if provider.dim != cfg.embed_dim:
            raise DimensionError("Embedding table dimension differs from config", expected=cfg.embed_dim, actual=provider.dim)
        return provider
    return HistogramProjectionProvider(
        dim=cfg.embed_dim, hist_bins=cfg.hist_bins, orient_bins=cfg.orient_bins, seed=cfg.seed
    )


@dataclass
class ConceptPair:
    """Learned "clear" and "smoky" concept vectors plus softmax temperature."""

    v_pos: np.ndarray
    v_neg: np.ndarray
    tau: float
    provider_id: str = ""
    corpus_hash: str | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.v_pos = np.asarray(self.v_pos, dtype=np.float64)
        self.v_neg = np.asarray(self.v_neg, dtype=np.float64)
        if self.v_pos.shape != self.v_neg.shape or self.v_pos.ndim != 1:
            raise DimensionError("Concept vectors must be 1-D and equal length", actual=(self.v_pos.shape, self.v_neg.shape))
        for name in ("v_pos", "v_neg"):
            norm = np.linalg.norm(getattr(self, name))
            if abs(norm - 1.0) > _UNIT_TOL:
                raise DomainError("Concept vectors must be unit-normalized", field=name, value=norm)
        if not self.tau > 0.0:
            raise DomainError("Temperature must be positive", field="tau", value=self.tau)

    @property
    def dim(self) -> int:
        return int(self.v_pos.shape[0])

    def to_json(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "v_pos": self.v_pos.tolist(),
            "v_neg": self.v_neg.tolist(),
            "tau": self.tau,
            "provider_id": self.provider_id,
            "corpus_hash": self.corpus_hash,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> ConceptPair:
        try:
            pair = cls(
                v_pos=np.asarray(data["v_pos"]),
                v_neg=np.asarray(data["v_neg"]),
                tau=float(data["tau"]),
                provider_id=data.get("provider_id", ""),
                corpus_hash=data.get("corpus_hash"),
                metadata=data.get("metadata", {}),
            )
        except KeyError as e:
            raise CorpusError(f"Malformed concept file: missing {e}") from e
        if pair.dim != int(data.get("dim", pair.dim)):
            raise DimensionError("Concept dimension field disagrees with vectors", expected=data["dim"], actual=pair.dim)
        return pair

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2)
        return path

    @classmethod
    def load(cls, path: str | Path) -> ConceptPair:
        path = Path(path)
        if not path.exists():
            raise PrerequisiteError("Concept file not found", missing=str(path))
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def match_loss(concepts: ConceptPair, lq_emb: np.ndarray, hq_emb: np.ndarray) -> float:
    """``-(cos(v_neg, lq) + cos(v_pos, hq))``; -2 is the global minimum."""
    return -(cosine(concepts.v_neg, lq_emb) + cosine(concepts.v_pos, hq_emb))


def _sphere_ascent(v: np.ndarray, targets: np.ndarray, lr: float) -> np.ndarray:
    # tangent-space gradient of mean cos(v, target) at unit v
    grad = targets.mean(axis=0) - (targets @ v).mean() * v
    return _unit(v + lr * grad)


def train_concepts(
    provider: EmbeddingProvider,
    pairs: Sequence[PairedSample],
    steps: int,
    lr: float,
    tau: float = 0.07,
    seed: int = 0,
    corpus_hash: str | None = None,
    keys: Sequence[tuple[str, str]] | None = None,
) -> ConceptPair:
    """
    Fit the concept pair by projected gradient descent on the mean match loss.

    Both vectors start from the same seed-derived random unit vector, so
    swapping the smoky and clean roles of the corpus swaps the result.

    Args:
        provider: Frozen encoder
        pairs: Paired corpus (smoky = low quality, clean = high quality)
        steps: Gradient steps (0 returns the initialization)
        lr: Step size
        tau: Temperature stored with the result
        seed: Initialization seed
        corpus_hash: Recorded for provenance
        keys: Optional (smoky_key, clean_key) per pair for table-backed providers

    Returns:
        ConceptPair with ``metadata["loss_trace"]`` and ``metadata["final_loss"]``
    """
    if len(pairs) == 0:
        raise DomainError("Concept training needs at least one pair", field="pairs")
    keys = keys if keys is not None else [(None, None)] * len(pairs)
    lq = np.array([provider.embed(p.smoky, k[0]) for p, k in zip(pairs, keys)])
    hq = np.array([provider.embed(p.clean, k[1]) for p, k in zip(pairs, keys)])

    init = _unit(np.random.default_rng(seed).standard_normal(provider.dim), "init")
    v_pos, v_neg = init.copy(), init.copy()

    def loss(vp: np.ndarray, vn: np.ndarray) -> float:
        value = -float((lq @ vn).mean() + (hq @ vp).mean())
        require_finite(value, "concept match loss")
        return value

    trace = [loss(v_pos, v_neg)]
    for _ in range(steps):
        v_pos = _sphere_ascent(v_pos, hq, lr)
        v_neg = _sphere_ascent(v_neg, lq, lr)
        trace.append(loss(v_pos, v_neg))

    logger.info(f"Trained concepts over {len(pairs)} pairs: loss {trace[0]:.4f} -> {trace[-1]:.4f}")
    return ConceptPair(
        v_pos=v_pos,
        v_neg=v_neg,
        tau=tau,
        provider_id=provider.provider_id,
        corpus_hash=corpus_hash,
        metadata={"loss_trace": trace, "final_loss": trace[-1], "steps": steps, "lr": lr, "seed": seed},
    )


def reward_concept(concepts: ConceptPair, img_emb: np.ndarray) -> float:
    """
    Log-probability of the "clear" concept under a two-way cosine softmax.

    Evaluated as ``-log(1 + exp((cos_neg - cos_pos) / tau))`` through
    ``logaddexp`` so that large logit gaps neither overflow nor round to zero
    prematurely.
    """
    if not concepts.tau > 0.0:
        raise DomainError("Temperature must be positive", field="tau", value=concepts.tau)
    gap = (cosine(img_emb, concepts.v_neg) - cosine(img_emb, concepts.v_pos)) / concepts.tau
    return -float(np.logaddexp(0.0, gap))

"""
Physics-guided reward.

Inter-channel term: tissue reflectance keeps the pairwise channel-mean gaps
within bounds estimated as the 95th percentile over clean reference images.
Red/green and red/blue gaps below their bound are penalized (smoke washes
colours toward the airlight), and a green/blue gap above its bound is
penalized.

Intra-channel term: green and blue lose more contrast and structure to smoke
than red, so a restoration should change them more than it changes red.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
import json
import logging
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..exceptions import CorpusError, DimensionError, DomainError
from ..imaging.image_core import ImageTensor, channel_stats, percentile

logger = logging.getLogger(__name__)

R, G, B = 0, 1, 2


@dataclass(frozen=True)
class PriorReference:
    """Percentile bounds of absolute channel-mean differences."""

    mrg: float
    mrb: float
    mgb: float
    corpus_hash: str | None = None
    percentile: float = 95.0

    def __post_init__(self) -> None:
        for name in ("mrg", "mrb", "mgb"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise DomainError("Prior bounds must be finite and non-negative", field=name, value=value)

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> PriorReference:
        try:
            return cls(
                mrg=float(data["mrg"]),
                mrb=float(data["mrb"]),
                mgb=float(data["mgb"]),
                corpus_hash=data.get("corpus_hash"),
                percentile=float(data.get("percentile", 95.0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CorpusError(f"Malformed prior reference: {e}") from e

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2)
        return path

    @classmethod
    def load(cls, path: str | Path) -> PriorReference:
        path = Path(path)
        if not path.exists():
            raise CorpusError("Prior reference not found", path=str(path))
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))


@dataclass(frozen=True)
class PhysicsRewardBreakdown:
    """Every intermediate of the physics-guided reward."""

    L_RG: float
    L_RB: float
    L_GB: float
    R_A: float
    delta_mu: np.ndarray
    delta_sigma: np.ndarray
    delta_grad: np.ndarray
    R_B: float
    R_PG: float


def build_prior_reference(
    corpus: Sequence[ImageTensor], pct: float = 95.0, corpus_hash: str | None = None
) -> PriorReference:
    """
    Percentile of |mu_R - mu_G|, |mu_R - mu_B| and |mu_G - mu_B| over ``corpus``.

    Raises:
        DomainError: If the corpus is empty
    """
    if len(corpus) == 0:
        raise DomainError("Cannot build priors from an empty corpus", field="corpus")
    mus = np.array([channel_stats(img).mu for img in corpus])
    ref = PriorReference(
        mrg=percentile(np.abs(mus[:, R] - mus[:, G]), pct),
        mrb=percentile(np.abs(mus[:, R] - mus[:, B]), pct),
        mgb=percentile(np.abs(mus[:, G] - mus[:, B]), pct),
        corpus_hash=corpus_hash,
        percentile=pct,
    )
    logger.info(
        f"Built priors from {len(corpus)} images: "
        f"MRG={ref.mrg:.4f}, MRB={ref.mrb:.4f}, MGB={ref.mgb:.4f}"
    )
    return ref


def reward_inter(pred: ImageTensor, ref: PriorReference) -> tuple[float, float, float, float]:
    """Hinge penalties (L_RG, L_RB, L_GB) and R_A = -(L_RG + L_RB + L_GB)."""
    mu = channel_stats(pred).mu
    l_rg = max(0.0, ref.mrg - abs(mu[R] - mu[G]))
    l_rb = max(0.0, ref.mrb - abs(mu[R] - mu[B]))
    l_gb = max(0.0, abs(mu[G] - mu[B]) - ref.mgb)
    return float(l_rg), float(l_rb), float(l_gb), float(-(l_rg + l_rb + l_gb))


def reward_intra(
    inp: ImageTensor, pred: ImageTensor
) -> tuple[tuple[np.ndarray, np.ndarray, np.ndarray], float]:
    """
    Per-channel absolute changes of mean, std and gradient, and R_B.

    R_B = sum over stats s of (d_s[G] + d_s[B]) / 2 - d_s[R]
    """
    if inp.shape != pred.shape:
        raise DimensionError("Input and prediction differ in size", expected=inp.shape, actual=pred.shape)
    s_in = channel_stats(inp)
    s_pred = channel_stats(pred)
    d_mu = np.abs(s_pred.mu - s_in.mu)
    d_sigma = np.abs(s_pred.sigma - s_in.sigma)
    d_grad = np.abs(s_pred.grad - s_in.grad)
    r_b = sum((d[G] + d[B]) / 2.0 - d[R] for d in (d_mu, d_sigma, d_grad))
    return (d_mu, d_sigma, d_grad), float(r_b)


def reward_physics(inp: ImageTensor, pred: ImageTensor, ref: PriorReference) -> PhysicsRewardBreakdown:
    """R_PG = R_A + R_B with all intermediates."""
    l_rg, l_rb, l_gb, r_a = reward_inter(pred, ref)
    (d_mu, d_sigma, d_grad), r_b = reward_intra(inp, pred)
    return PhysicsRewardBreakdown(
        L_RG=l_rg,
        L_RB=l_rb,
        L_GB=l_gb,
        R_A=r_a,
        delta_mu=d_mu,
        delta_sigma=d_sigma,
        delta_grad=d_grad,
        R_B=r_b,
        R_PG=r_a + r_b,
    )


def physics_breakdown_row(b: PhysicsRewardBreakdown) -> dict[str, float]:
    """Flat column mapping for CSV reports."""
    row = {"L_RG": b.L_RG, "L_RB": b.L_RB, "L_GB": b.L_GB, "R_A": b.R_A, "R_B": b.R_B, "R_PG": b.R_PG}
    for name, arr in (("dmu", b.delta_mu), ("dsigma", b.delta_sigma), ("dgrad", b.delta_grad)):
        for i, ch in enumerate("RGB"):
            row[f"{name}_{ch}"] = float(arr[i])
    return row

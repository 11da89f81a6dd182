"""
Command implementations behind the ``smoke-rpo`` entry point.

Each ``cmd_*`` takes a validated ``RunConfig``, reads the artifacts of the
earlier stages from ``paths``, writes its own outputs under
``paths.out_dir`` together with ``effective_config.yaml`` and returns a small
result record. Missing upstream artifacts raise ``PrerequisiteError``.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
import json
import logging
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..config.config_manager import ConfigManager
from ..config.config_models import ProviderType, RunConfig
from ..diffusion.checkpoint import load_model, save_checkpoint
from ..diffusion.denoiser import DenoiserModel
from ..diffusion.sampler import restore
from ..diffusion.schedule import make_schedule
from ..exceptions import ConfigurationError, DimensionError, PrerequisiteError
from ..imaging.image_core import ImageTensor, psnr
from ..imaging.ppm_io import read_ppm, write_ppm
from ..optimization.advantages import CompositeReward
from ..optimization.optimizers import build_optimizer
from ..optimization.trainer import pretrain, rpo_train
from ..reporting.metrics import (
    PRETRAIN_COLUMNS,
    RPO_COLUMNS,
    MetricsWriter,
    read_metrics_csv,
    window_summary,
)
from ..reporting.plots import plot_loss_curve, plot_reward_curves
from ..rewards.physics import PriorReference, build_prior_reference, physics_breakdown_row
from ..rewards.quality import build_scorers
from ..rewards.semantic import ConceptPair, build_provider, train_concepts
from ..synthesis.corpus_io import (
    MANIFEST_NAME,
    LoadedCorpus,
    image_key,
    load_corpus,
    load_images,
    read_manifest,
    write_corpus,
)
from ..synthesis.smoke_synth import gen_corpus

logger = logging.getLogger(__name__)

PRETRAIN_LOSS_CSV = "pretrain_loss.csv"
RPO_METRICS_CSV = "rpo_metrics.csv"
SCORES_CSV = "scores.csv"
RESTORE_DIR = "restored"
RESTORE_REPORT_CSV = "restore_report.csv"
REWARD_CURVES_PNG = "reward_curves.png"
LOSS_CURVE_PNG = "pretrain_loss.png"
SUMMARY_JSON = "summary.json"

ABLATIONS = ("pg", "rf", "vc")


# ====== Shared plumbing ======


def prepare_out_dir(config: RunConfig) -> Path:
    """Create ``paths.out_dir`` and write the effective configuration into it."""
    out = Path(config.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ConfigManager.write_effective_config(config, out)
    return out


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise PrerequisiteError(f"Missing {what}; run the producing command first", missing=str(path))
    return path


def _load_train_corpus(config: RunConfig) -> LoadedCorpus:
    root = config.paths.resolve("corpus_dir")
    _require(root / MANIFEST_NAME, "corpus (synth)")
    return load_corpus(root)


def concept_vector(config: RunConfig) -> np.ndarray | None:
    """
    Conditioning vector fed to the denoiser: the "clear" concept when the
    architecture has a concept input and a concept file exists.
    """
    if config.denoiser.concept_dim == 0:
        return None
    path = config.paths.resolve("concepts")
    if not path.exists():
        return None
    pair = ConceptPair.load(path)
    if pair.dim != config.denoiser.concept_dim:
        raise DimensionError("Concept file dimension differs from denoiser.concept_dim", expected=config.denoiser.concept_dim, actual=pair.dim)
    return pair.v_pos


def _checkpoint_concept(config: RunConfig, metadata: dict[str, Any]) -> np.ndarray | None:
    if not metadata.get("concept_conditioned"):
        return None
    vec = concept_vector(config)
    if vec is None:
        raise PrerequisiteError(
            "Checkpoint was trained with concept conditioning but no concept file is available",
            missing=str(config.paths.resolve("concepts")),
        )
    return vec


def apply_ablations(config: RunConfig, ablations: Sequence[str]) -> RunConfig:
    """Copy of ``config`` with the named reward weights set to zero."""
    unknown = [a for a in ablations if a not in ABLATIONS]
    if unknown:
        raise ConfigurationError(f"Unknown ablations: {unknown}")
    if not ablations:
        return config
    data = config.to_plain_dict()
    for name in ablations:
        data["rpo"]["weights"][name] = 0.0
    return RunConfig(**data)


def build_reward(config: RunConfig, with_concepts: bool = True) -> CompositeReward:
    """
    Composite reward from the stored priors, concepts and configured scorers.

    Ingredients are loaded when their files exist; a positive weight on a term
    whose ingredients are missing raises ``PrerequisiteError``. Without
    ``with_concepts`` the concept term is left out of the diagnostics too.
    """
    weights = config.rpo.weights
    priors_path = config.paths.resolve("priors")
    concepts_path = config.paths.resolve("concepts")
    priors = PriorReference.load(priors_path) if priors_path.exists() else None
    concepts = ConceptPair.load(concepts_path) if with_concepts and concepts_path.exists() else None
    provider = build_provider(config.concepts) if concepts is not None else None
    if concepts is not None and provider is not None and concepts.provider_id != provider.provider_id:
        logger.warning(
            f"Concepts were trained with {concepts.provider_id}, scoring with {provider.provider_id}"
        )
    scorers = build_scorers(config.quality)
    return CompositeReward(weights, priors=priors, concepts=concepts, provider=provider, scorers=scorers)


# ====== synth / concepts / priors ======


def cmd_synth(config: RunConfig, force: bool = False) -> dict[str, Any]:
    """
    Generate the paired corpus.

    An existing corpus is kept unless ``force`` is set; the manifest of the
    corpus on disk is returned either way.
    """
    prepare_out_dir(config)
    root = config.paths.resolve("corpus_dir")
    if (root / MANIFEST_NAME).exists() and not force:
        logger.info(f"Corpus already present at {root}; use --force to regenerate")
        return read_manifest(root)

    synth = config.synth
    samples = gen_corpus(synth.smoke, synth.n, synth.height, synth.width, workers=synth.workers)
    return write_corpus(samples, root, synth.smoke, synth.train_ratio, config.config_hash())


def cmd_concepts(config: RunConfig) -> ConceptPair:
    """Train the clear/smoky concept pair on the corpus train split."""
    prepare_out_dir(config)
    corpus = _load_train_corpus(config)
    provider = build_provider(config.concepts)
    train_idx = corpus.manifest["split"]["train"]

    keys = corpus.pair_keys(train_idx) if config.concepts.provider == ProviderType.PRECOMPUTED else None

    cc = config.concepts
    pair = train_concepts(
        provider,
        corpus.train,
        steps=cc.steps,
        lr=cc.lr,
        tau=cc.tau,
        seed=cc.seed,
        corpus_hash=corpus.manifest.get("corpus_hash"),
        keys=keys,
    )
    pair.metadata["config_hash"] = config.config_hash()
    path = pair.save(config.paths.resolve("concepts"))
    logger.info(f"Concept pair saved to {path} (final loss {pair.metadata['final_loss']:.4f})")
    return pair


def cmd_priors(config: RunConfig) -> PriorReference:
    """Build the inter-channel prior reference from the clean train split."""
    prepare_out_dir(config)
    corpus = _load_train_corpus(config)
    ref = build_prior_reference(
        [s.clean for s in corpus.train],
        pct=config.priors.percentile,
        corpus_hash=corpus.manifest.get("corpus_hash"),
    )
    path = ref.save(config.paths.resolve("priors"))
    logger.info(f"Prior reference saved to {path}")
    return ref


# ====== pretrain / rpo ======


@dataclass
class TrainingOutcome:
    checkpoint: Path
    metrics_csv: Path
    rows: int
    first_value: float | None = None
    last_value: float | None = None


def cmd_pretrain(config: RunConfig, resume: bool = False) -> TrainingOutcome:
    """
    Supervised cold start on the paired train split.

    With ``resume`` and an existing checkpoint, training continues at the
    recorded step with the saved optimizer state and the loss CSV is
    appended to.
    """
    out = prepare_out_dir(config)
    corpus = _load_train_corpus(config)
    h, w = corpus.manifest["height"], corpus.manifest["width"]
    ckpt_path = config.paths.resolve("pretrain_checkpoint")
    concept = concept_vector(config)

    p = config.pretrain
    optimizer = build_optimizer(p.optimizer, p.lr, p.weight_decay)
    start_step = 0
    if resume and ckpt_path.exists():
        model, sched, ckpt = load_model(ckpt_path)
        start_step = int(ckpt.metadata.get("steps_done", 0))
        if "optimizer" in ckpt.metadata:
            optimizer.load_state_dict(ckpt.metadata["optimizer"])
        else:
            logger.warning("Checkpoint carries no optimizer state; moments start fresh")
        if ckpt.config.get("config_hash") != config.config_hash():
            logger.warning("Resuming from a checkpoint written under a different configuration")
        if bool(ckpt.metadata.get("concept_conditioned")) != (concept is not None):
            logger.warning("Concept conditioning differs from the resumed checkpoint")
        logger.info(f"Resuming pretraining at step {start_step}")
    else:
        if resume:
            logger.warning(f"No checkpoint at {ckpt_path}; starting from scratch")
        d = config.diffusion
        sched = make_schedule(d.T, d.beta_min, d.beta_max)
        model = DenoiserModel(config.denoiser, h * w * 3, sched.T)

    metadata = {
        "config_hash": config.config_hash(),
        "stage": "pretrain",
        "seed": config.pretrain.seed,
        "corpus_hash": corpus.manifest.get("corpus_hash"),
    }
    csv_path = out / PRETRAIN_LOSS_CSV
    with MetricsWriter(csv_path, PRETRAIN_COLUMNS, metadata, append=start_step > 0) as writer:
        result = pretrain(
            model,
            sched,
            corpus.train,
            config.pretrain,
            concept=concept,
            start_step=start_step,
            on_record=lambda r: writer.write(asdict(r)),
            optimizer=optimizer,
        )

    steps_done = start_step + config.pretrain.steps
    save_checkpoint(
        ckpt_path,
        model,
        sched,
        config_hash=config.config_hash(),
        metadata={
            "stage": "pretrain",
            "steps_done": steps_done,
            "seed": config.pretrain.seed,
            "concept_conditioned": concept is not None,
            "corpus_hash": corpus.manifest.get("corpus_hash"),
            "optimizer": optimizer.state_dict(),
        },
    )
    losses = result.losses
    if losses:
        logger.info(f"Pretraining finished at step {steps_done}: loss {losses[0]:.6f} -> {losses[-1]:.6f}")
    return TrainingOutcome(
        checkpoint=ckpt_path,
        metrics_csv=csv_path,
        rows=len(losses),
        first_value=losses[0] if losses else None,
        last_value=losses[-1] if losses else None,
    )


def _rpo_conditions(config: RunConfig) -> list[ImageTensor]:
    if config.paths.unpaired_dir:
        _, images = load_images(_require(config.paths.resolve("unpaired_dir"), "unpaired smoky images"))
        return images
    return [s.smoky for s in _load_train_corpus(config).train]


def cmd_rpo(config: RunConfig, ablations: Sequence[str] = ()) -> TrainingOutcome:
    """
    Reward-guided refinement of the cold-start checkpoint.

    ``ablations`` names reward terms (``pg``, ``rf``, ``vc``) whose weight is
    forced to zero; they are recorded in the metrics header and the effective
    configuration.

    Raises:
        ConfigurationError: If the concept reward is weighted but embeddings
            come from the precomputed table, which has no entries for rollouts
    """
    config = apply_ablations(config, ablations)
    if config.concepts.provider == ProviderType.PRECOMPUTED and config.rpo.weights.vc > 0.0:
        raise ConfigurationError(
            "The precomputed embedding provider serves only 'concepts' and 'score'; "
            "refinement rollouts are not in its table. Use the histogram provider or --no-vc",
            {"concepts.provider": "precomputed", "rpo.weights.vc": config.rpo.weights.vc},
        )
    out = prepare_out_dir(config)
    model, sched, ckpt = load_model(_require(config.paths.resolve("pretrain_checkpoint"), "pretrain checkpoint"))
    concept = _checkpoint_concept(config, ckpt.metadata)
    # Rollouts have no table key
    reward = build_reward(config, with_concepts=config.concepts.provider != ProviderType.PRECOMPUTED)
    conditions = _rpo_conditions(config)

    rpo = config.rpo
    metadata = {
        "config_hash": config.config_hash(),
        "stage": "rpo",
        "weights": rpo.weights.model_dump(),
        "ablations": sorted(ablations),
        "lambda_kl": rpo.lambda_kl,
        "clip_eps": rpo.clip_eps,
        "G": rpo.G,
        "seed": rpo.seed,
        "ratio_mode": rpo.ratio_mode.value,
        "step_stride": rpo.step_stride,
        "pretrain_config_hash": ckpt.config.get("config_hash"),
    }
    csv_path = out / RPO_METRICS_CSV
    with MetricsWriter(csv_path, RPO_COLUMNS, metadata) as writer:
        result = rpo_train(model, sched, conditions, reward, rpo, concept=concept, on_metrics=writer.write)

    ckpt_path = save_checkpoint(
        config.paths.resolve("rpo_checkpoint"),
        model,
        sched,
        config_hash=config.config_hash(),
        metadata={
            "stage": "rpo",
            "iterations": rpo.iterations,
            "seed": rpo.seed,
            "ablations": sorted(ablations),
            "concept_conditioned": concept is not None,
        },
    )
    rewards = [row["mean_reward"] for row in result.metrics]
    return TrainingOutcome(
        checkpoint=ckpt_path,
        metrics_csv=csv_path,
        rows=len(rewards),
        first_value=rewards[0] if rewards else None,
        last_value=rewards[-1] if rewards else None,
    )


# ====== score / restore / report ======


def cmd_score(config: RunConfig, image_dir: str | Path, input_dir: str | Path | None = None) -> Path:
    """
    Per-image composite reward breakdown of a directory of restorations.

    The physics intra-channel term compares each image with the same-named
    file of ``input_dir``; without one the image is compared with itself.
    Weighted term columns ``w_pg``, ``w_rf`` and ``w_vc`` sum to ``total``.
    Table-backed scorers and providers see each image under ``image_key``:
    its path relative to the corpus root, as in ``concepts``.
    """
    out = prepare_out_dir(config)
    image_dir = Path(_require(Path(image_dir), "image directory"))
    names, images = load_images(image_dir)
    inputs = images
    if input_dir is not None:
        input_dir = _require(Path(input_dir), "input directory")
        inputs = load_images_named(input_dir, names)[1]

    reward = build_reward(config)
    weights = config.rpo.weights
    corpus_root = config.paths.resolve("corpus_dir")
    rows = []
    for name, inp, img in zip(names, inputs, images):
        b = reward.evaluate(inp, img, key=image_key(image_dir / name, corpus_root))
        row: dict[str, Any] = {
            "path": name,
            "r_pg": b.r_pg,
            "r_rf": b.r_rf,
            "r_vc": b.r_vc,
            "w_pg": weights.pg * b.r_pg,
            "w_rf": weights.rf * b.r_rf,
            "w_vc": weights.vc * b.r_vc,
            "total": b.total,
        }
        if b.physics is not None:
            row.update(physics_breakdown_row(b.physics))
        row.update({f"q_{k}": v for k, v in b.quality_terms.items()})
        rows.append(row)

    csv_path = out / SCORES_CSV
    columns = list(rows[0].keys())
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# config_hash: {config.config_hash()}\n")
        f.write(f"# image_dir: {image_dir}\n")
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    logger.info(f"Scored {len(rows)} images -> {csv_path} (mean total {np.mean([r['total'] for r in rows]):.4f})")
    return csv_path


def load_images_named(directory: Path, names: Sequence[str]) -> tuple[list[str], list[ImageTensor]]:
    """Images of ``directory`` with the given file names, in that order."""
    images = [read_ppm(_require(directory / n, f"image {n}")) for n in names]
    return list(names), images


@dataclass
class RestoreOutcome:
    out_dir: Path
    report_csv: Path
    count: int
    mean_psnr: float | None = None
    mean_psnr_input: float | None = None
    files: list[str] = field(default_factory=list)


def _restore_sources(
    config: RunConfig, smoky_dir: str | Path | None
) -> tuple[list[str], list[ImageTensor], list[ImageTensor] | None]:
    if smoky_dir is None:
        corpus = _load_train_corpus(config)
        idx = corpus.manifest["split"]["val"] or corpus.manifest["split"]["train"]
        names = [corpus.names[i] for i in idx]
        return names, [corpus.samples[i].smoky for i in idx], [corpus.samples[i].clean for i in idx]

    smoky_dir = _require(Path(smoky_dir), "smoky image directory")
    names, images = load_images(smoky_dir)
    clean_dir = smoky_dir.parent / "clean"
    clean = load_images_named(clean_dir, names)[1] if clean_dir.is_dir() else None
    return names, images, clean


def cmd_restore(
    config: RunConfig,
    smoky_dir: str | Path | None = None,
    checkpoint: str | Path | None = None,
    deterministic: bool | None = None,
) -> RestoreOutcome:
    """
    Restore every smoky image and report PSNR when clean references exist.

    The checkpoint defaults to the refined one, falling back to the cold
    start. Without ``smoky_dir`` the corpus validation split is restored.
    ``deterministic`` zeroes all injected noise; otherwise image ``i`` uses a
    generator seeded by ``(restore.seed, i)``.
    """
    out = prepare_out_dir(config)
    if checkpoint is None:
        rpo_ckpt = config.paths.resolve("rpo_checkpoint")
        checkpoint = rpo_ckpt if rpo_ckpt.exists() else config.paths.resolve("pretrain_checkpoint")
    ckpt_path = _require(Path(checkpoint), "checkpoint")
    model, sched, ckpt = load_model(ckpt_path)
    concept = _checkpoint_concept(config, ckpt.metadata)
    deterministic = config.restore.deterministic if deterministic is None else deterministic

    names, smoky, clean = _restore_sources(config, smoky_dir)
    restored_dir = out / RESTORE_DIR
    rows = []
    for i, (name, img) in enumerate(zip(names, smoky)):
        rng = None if deterministic else np.random.default_rng([config.restore.seed, i])
        pred = restore(model, sched, img, rng=rng, concept=concept)
        write_ppm(restored_dir / name, pred)
        row: dict[str, Any] = {"path": name}
        if clean is not None:
            row["psnr_input"] = psnr(img, clean[i])
            row["psnr"] = psnr(pred, clean[i])
        rows.append(row)

    report = out / RESTORE_REPORT_CSV
    columns = ["path", "psnr_input", "psnr"] if clean is not None else ["path"]
    with open(report, "w", newline="", encoding="utf-8") as f:
        f.write(f"# config_hash: {config.config_hash()}\n")
        f.write(f"# checkpoint: {ckpt_path}\n")
        f.write(f"# deterministic: {int(deterministic)}\n")
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})

    sidecar = {
        "config_hash": config.config_hash(),
        "checkpoint": str(ckpt_path),
        "checkpoint_config_hash": ckpt.config.get("config_hash"),
        "deterministic": deterministic,
        "seed": config.restore.seed,
        "files": names,
    }
    with open(restored_dir / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2)

    outcome = RestoreOutcome(out_dir=restored_dir, report_csv=report, count=len(rows), files=list(names))
    if clean is not None:
        outcome.mean_psnr = float(np.mean([r["psnr"] for r in rows]))
        outcome.mean_psnr_input = float(np.mean([r["psnr_input"] for r in rows]))
        logger.info(
            f"Restored {len(rows)} images: PSNR {outcome.mean_psnr_input:.2f} dB -> {outcome.mean_psnr:.2f} dB"
        )
    else:
        logger.info(f"Restored {len(rows)} images to {restored_dir}")
    return outcome


def cmd_report(
    config: RunConfig, csv_paths: Sequence[str | Path] | None = None, window: int = 20
) -> dict[str, Any]:
    """
    Reward-curve figure and first/last-window summaries of refinement runs.

    Defaults to the run's own metrics file; the cold-start loss curve is
    plotted too when present.
    """
    out = prepare_out_dir(config)
    paths = [Path(p) for p in csv_paths] if csv_paths else [out / RPO_METRICS_CSV]
    for p in paths:
        _require(p, "metrics CSV (rpo)")

    summaries = {}
    for p in paths:
        summary = window_summary(read_metrics_csv(p), window)
        summaries[str(p)] = summary.as_dict()
        logger.info(
            f"{p.name}: reward {summary.first_mean:.4f} -> {summary.last_mean:.4f}, "
            f"variance ratio {summary.var_ratio:.3f}"
        )
        if not summary.improved:
            logger.warning(f"{p.name}: mean reward did not improve over the run")

    report: dict[str, Any] = {
        "config_hash": config.config_hash(),
        "window": window,
        "summaries": summaries,
        "reward_curves": str(plot_reward_curves(paths, out / REWARD_CURVES_PNG, window=max(1, window // 2))),
    }
    loss_csv = out / PRETRAIN_LOSS_CSV
    if loss_csv.exists():
        report["loss_curve"] = str(plot_loss_curve(loss_csv, out / LOSS_CURVE_PNG))

    with open(out / SUMMARY_JSON, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2)
    return report

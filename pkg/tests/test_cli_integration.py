#!/usr/bin/env python3
"""
Integration tests for the command pipeline: synth, concepts, priors,
pretrain, rpo, score, restore and report on a tiny configuration, plus the
exit codes of the ``main`` entry point.
"""

import csv
import json
from pathlib import Path
from typing import Any

from main import main
import numpy as np
import pytest
import yaml

from src.cli import cmd_concepts, cmd_pretrain, cmd_priors, cmd_report, cmd_restore, cmd_rpo, cmd_score, cmd_synth
from src.config import EFFECTIVE_CONFIG_NAME, ConfigManager, RunConfig
from src.diffusion.checkpoint import load_checkpoint
from src.exceptions import ConfigurationError, PrerequisiteError
from src.imaging.image_core import ImageTensor
from src.imaging.ppm_io import write_ppm
from src.reporting import read_metrics_csv, window_summary
from src.rewards.physics import PriorReference
from tests.conftest import PATCH, tiny_config_dict

pytestmark = pytest.mark.integration

SHIPPED_CONFIG = Path(__file__).resolve().parent.parent / "config.yaml"

# ============================== Fixtures ====================================


def prepare_stages(config: RunConfig) -> None:
    """Everything up to and including the cold start."""
    cmd_synth(config)
    cmd_concepts(config)
    cmd_priors(config)
    cmd_pretrain(config)


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory: pytest.TempPathFactory) -> RunConfig:
    """A run directory holding every stage's artifacts up to refinement."""
    config = RunConfig(**tiny_config_dict(tmp_path_factory.mktemp("trained") / "run"))
    prepare_stages(config)
    cmd_rpo(config)
    return config


def write_config(path: Path, data: dict[str, Any]) -> Path:
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def read_report(path: Path) -> list[dict[str, str]]:
    """Rows of a ``#``-prefixed CSV report."""
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


# ============================== Early stages ================================


class TestEarlyStages:
    """Corpus, concepts and priors."""

    def test_synth_keeps_existing_corpus(self, tiny_config: RunConfig) -> None:
        first = cmd_synth(tiny_config)
        assert first["n"] == 6
        assert (Path(tiny_config.paths.out_dir) / EFFECTIVE_CONFIG_NAME).exists()

        data = tiny_config.to_plain_dict()
        data["synth"]["n"] = 4
        smaller = RunConfig(**data)
        assert cmd_synth(smaller)["corpus_hash"] == first["corpus_hash"]
        assert cmd_synth(smaller, force=True)["n"] == 4

    def test_concepts_and_priors(self, tiny_config: RunConfig) -> None:
        cmd_synth(tiny_config)
        pair = cmd_concepts(tiny_config)
        assert pair.dim == 8
        assert tiny_config.paths.resolve("concepts").exists()
        ref = cmd_priors(tiny_config)
        assert PriorReference.load(tiny_config.paths.resolve("priors")) == ref

    def test_stages_need_corpus(self, tiny_config: RunConfig) -> None:
        with pytest.raises(PrerequisiteError):
            cmd_pretrain(tiny_config)
        with pytest.raises(PrerequisiteError):
            cmd_priors(tiny_config)

    def test_rpo_needs_checkpoint(self, tiny_config: RunConfig) -> None:
        cmd_synth(tiny_config)
        with pytest.raises(PrerequisiteError):
            cmd_rpo(tiny_config)


# ============================== Training ====================================


class TestTrainingStages:
    """Cold start and refinement."""

    def test_pretrain_resume_appends(self, tiny_config: RunConfig) -> None:
        cmd_synth(tiny_config)
        cmd_concepts(tiny_config)
        first = cmd_pretrain(tiny_config)
        assert first.rows == 8
        second = cmd_pretrain(tiny_config, resume=True)
        assert second.rows == 8

        table = read_metrics_csv(second.metrics_csv)
        assert [row["step"] for row in table.rows] == [float(s) for s in range(16)]
        meta = load_checkpoint(second.checkpoint).metadata
        assert meta["steps_done"] == 16
        assert meta["concept_conditioned"] is True
        assert meta["optimizer"]["steps"] == 16

    def test_pretrain_resume_matches_continuous_run(self, tmp_path: Path) -> None:
        data = tiny_config_dict(tmp_path / "continuous")
        data["pretrain"]["steps"] = 16
        continuous = RunConfig(**data)
        cmd_synth(continuous)
        cmd_concepts(continuous)
        whole = cmd_pretrain(continuous)

        split = RunConfig(**tiny_config_dict(tmp_path / "split"))
        cmd_synth(split)
        cmd_concepts(split)
        cmd_pretrain(split)
        resumed = cmd_pretrain(split, resume=True)

        expected = [row["loss"] for row in read_metrics_csv(whole.metrics_csv).rows]
        assert [row["loss"] for row in read_metrics_csv(resumed.metrics_csv).rows] == expected
        assert np.array_equal(load_checkpoint(resumed.checkpoint).theta, load_checkpoint(whole.checkpoint).theta)

    def test_rpo_metrics(self, trained_run: RunConfig) -> None:
        table = read_metrics_csv(Path(trained_run.paths.out_dir) / "rpo_metrics.csv")
        assert len(table.rows) == 3
        assert table.metadata["config_hash"] == trained_run.config_hash()
        assert json.loads(table.metadata["ablations"]) == []
        assert trained_run.paths.resolve("rpo_checkpoint").exists()

    def test_rpo_ablation_recorded(self, trained_run: RunConfig, tmp_path: Path) -> None:
        data = trained_run.to_plain_dict()
        for key in ("corpus_dir", "pretrain_checkpoint", "priors", "concepts"):
            data["paths"][key] = str(trained_run.paths.resolve(key))
        data["paths"]["out_dir"] = str(tmp_path / "no_vc")
        outcome = cmd_rpo(RunConfig(**data), ["vc"])

        table = read_metrics_csv(outcome.metrics_csv)
        assert json.loads(table.metadata["weights"])["vc"] == 0.0
        assert json.loads(table.metadata["ablations"]) == ["vc"]
        assert all(row["r_vc_mean"] != 0.0 for row in table.rows)

    def test_unknown_ablation(self, tiny_config: RunConfig) -> None:
        with pytest.raises(ConfigurationError):
            cmd_rpo(tiny_config, ["ssim"])

    def test_rpo_deterministic(self, tmp_path: Path) -> None:
        rows = []
        for name in ("a", "b"):
            config = RunConfig(**tiny_config_dict(tmp_path / name))
            prepare_stages(config)
            rows.append(read_metrics_csv(cmd_rpo(config).metrics_csv).rows)
        assert rows[0] == rows[1]
        assert all(row["wall_ms"] == 0.0 for row in rows[0])


# ============================== Evaluation ==================================


class TestScore:
    """Per-image reward breakdowns."""

    def test_scores_sum_to_total(self, trained_run: RunConfig) -> None:
        corpus = trained_run.paths.resolve("corpus_dir")
        path = cmd_score(trained_run, corpus / "clean", corpus / "smoky")
        rows = read_report(path)
        assert len(rows) == 6
        for row in rows:
            weighted = float(row["w_pg"]) + float(row["w_rf"]) + float(row["w_vc"])
            assert float(row["total"]) == pytest.approx(weighted, abs=1e-12)
            assert "R_A" in row and "q_ceiq_proxy" in row

    def test_gray_image_misses_channel_priors(self, trained_run: RunConfig, tmp_path: Path) -> None:
        write_ppm(tmp_path / "gray" / "a.ppm", ImageTensor.constant(PATCH, PATCH, (0.5, 0.5, 0.5)))
        ref = PriorReference.load(trained_run.paths.resolve("priors"))
        (row,) = read_report(cmd_score(trained_run, tmp_path / "gray"))
        assert float(row["R_A"]) == pytest.approx(-(ref.mrg + ref.mrb), abs=1e-12)
        assert float(row["R_B"]) == 0.0

    def test_missing_directory(self, trained_run: RunConfig, tmp_path: Path) -> None:
        with pytest.raises(PrerequisiteError):
            cmd_score(trained_run, tmp_path / "absent")


class TestPrecomputedEmbeddings:
    """One embedding table shared by concept training and scoring."""

    @pytest.fixture
    def table_config(self, tmp_path: Path) -> RunConfig:
        rng = np.random.default_rng(8)
        table = {
            f"{kind}/{i:04d}.ppm": list(rng.normal(size=8) + (1.0 if kind == "clean" else -1.0))
            for kind in ("clean", "smoky")
            for i in range(6)
        }
        table_path = tmp_path / "embeddings.json"
        table_path.write_text(json.dumps(table), encoding="utf-8")
        data = tiny_config_dict(tmp_path / "run")
        data["concepts"].update({"provider": "precomputed", "embeddings_path": str(table_path)})
        return RunConfig(**data)

    def test_table_serves_concepts_and_score(self, table_config: RunConfig) -> None:
        cmd_synth(table_config)
        pair = cmd_concepts(table_config)
        assert pair.provider_id.startswith("precomputed:")
        cmd_priors(table_config)

        corpus = table_config.paths.resolve("corpus_dir")
        rows = read_report(cmd_score(table_config, corpus / "clean", corpus / "smoky"))
        assert len(rows) == 6
        assert all(float(row["r_vc"]) != 0.0 for row in rows)

    def test_refinement_rejects_table_provider(self, table_config: RunConfig) -> None:
        with pytest.raises(ConfigurationError, match="precomputed"):
            cmd_rpo(table_config)

    def test_refinement_without_concept_reward(self, table_config: RunConfig) -> None:
        prepare_stages(table_config)
        outcome = cmd_rpo(table_config, ["vc"])
        table = read_metrics_csv(outcome.metrics_csv)
        assert len(table.rows) == 3
        assert all(row["r_vc_mean"] == 0.0 for row in table.rows)

    def test_rejected_at_entry_point(self, tmp_path: Path, table_config: RunConfig) -> None:
        path = write_config(tmp_path / "config.yaml", table_config.to_plain_dict())
        assert main(["rpo", "--config", str(path)]) == 2


class TestRestore:
    """Restoration and PSNR reporting."""

    def test_validation_split(self, trained_run: RunConfig) -> None:
        outcome = cmd_restore(trained_run, deterministic=True)
        assert outcome.count == 3
        assert outcome.mean_psnr is not None and outcome.mean_psnr_input is not None
        assert read_report(outcome.report_csv)[0].keys() == {"path", "psnr_input", "psnr"}
        assert set(outcome.files) <= {p.name for p in outcome.out_dir.glob("*.ppm")}

    def test_deterministic_is_repeatable(self, trained_run: RunConfig) -> None:
        first = cmd_restore(trained_run, deterministic=True)
        before = [(first.out_dir / name).read_bytes() for name in first.files]
        second = cmd_restore(trained_run, deterministic=True)
        assert [(second.out_dir / name).read_bytes() for name in second.files] == before

    def test_directory_without_references(self, trained_run: RunConfig, tmp_path: Path) -> None:
        rng = np.random.default_rng(0)
        smoky_dir = tmp_path / "loose" / "inputs"
        for i in range(2):
            write_ppm(smoky_dir / f"{i}.ppm", ImageTensor(rng.uniform(size=(PATCH, PATCH, 3))))
        outcome = cmd_restore(trained_run, smoky_dir, checkpoint=trained_run.paths.resolve("pretrain_checkpoint"))
        assert outcome.count == 2
        assert outcome.mean_psnr is None
        assert read_report(outcome.report_csv)[0].keys() == {"path"}


class TestReport:
    """Figures and window summaries."""

    def test_report_outputs(self, trained_run: RunConfig) -> None:
        report = cmd_report(trained_run, window=2)
        out = Path(trained_run.paths.out_dir)
        assert Path(report["reward_curves"]).exists()
        assert Path(report["loss_curve"]).exists()
        assert json.loads((out / "summary.json").read_text(encoding="utf-8"))["window"] == 2
        (summary,) = report["summaries"].values()
        assert summary["window"] == 2

    def test_missing_metrics(self, tiny_config: RunConfig) -> None:
        with pytest.raises(PrerequisiteError):
            cmd_report(tiny_config)


# ============================== Entry point =================================


class TestMain:
    """Exit codes of the command-line entry point."""

    def test_synth_succeeds(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        path = write_config(tmp_path / "config.yaml", tiny_config_dict(tmp_path / "run"))
        assert main(["synth", "--config", str(path)]) == 0
        assert "Corpus: 6 pairs" in capsys.readouterr().out

    def test_invalid_configuration(self, tmp_path: Path) -> None:
        data = tiny_config_dict(tmp_path / "run")
        data["rpo"]["G"] = 1
        path = write_config(tmp_path / "config.yaml", data)
        assert main(["synth", "--config", str(path)]) == 2

    def test_missing_prerequisite(self, tmp_path: Path) -> None:
        path = write_config(tmp_path / "config.yaml", tiny_config_dict(tmp_path / "run"))
        assert main(["pretrain", "--config", str(path)]) == 3

    def test_out_override(self, tmp_path: Path) -> None:
        path = write_config(tmp_path / "config.yaml", tiny_config_dict(tmp_path / "run"))
        assert main(["synth", "--config", str(path), "--out", str(tmp_path / "other")]) == 0
        assert (tmp_path / "other" / "corpus").is_dir()


# ============================== Trends ======================================


@pytest.mark.slow
class TestRefinementTrend:
    """Reward variance under the shipped refinement settings."""

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_variance_stays_bounded(self, seed: int, tmp_path: Path) -> None:
        overrides = ConfigManager.seed_overrides(seed)
        overrides.update(
            {
                "paths": {"out_dir": str(tmp_path / "run")},
                "synth": {"n": 40},
                "pretrain": {"steps": 200},
                "concepts": {"steps": 50},
                "rpo": {"iterations": 60},
                "logging": {"level": "WARNING"},
            }
        )
        config = ConfigManager().load(SHIPPED_CONFIG, overrides)
        prepare_stages(config)
        summary = window_summary(read_metrics_csv(cmd_rpo(config).metrics_csv), window=15)
        assert summary.last_var < 5.0 * summary.first_var

#!/usr/bin/env python3
"""
Desk-scale trend runner for Smoke-RPO.

Runs the full pipeline (synth, concepts, priors, pretrain, rpo, restore) for
several seeds and generates:
- artifacts/benchmark_results.md  (markdown report with per-seed metrics)
- artifacts/reward_curves.png  (mean reward and variance of every seed)
- artifacts/psnr_comparison.png  (smoky vs cold start vs refined PSNR)

With ``--ablation`` each seed also trains a refinement without the physics
reward and compares the mean |R_A| of both restorations.
"""

# Force non-interactive matplotlib backend BEFORE importing pyplot.
import matplotlib

matplotlib.use("Agg")

import argparse
import csv
from pathlib import Path
import sys
import traceback

import matplotlib.pyplot as plt
import numpy as np

from src.cli import (
    cmd_concepts,
    cmd_pretrain,
    cmd_priors,
    cmd_restore,
    cmd_rpo,
    cmd_score,
    cmd_synth,
)
from src.cli.commands import RESTORE_DIR, RPO_METRICS_CSV
from src.config import ConfigManager, RunConfig
from src.reporting import plot_reward_curves, read_metrics_csv, window_summary

ARTIFACTS = Path("artifacts")


def _seed_config(config_file: str | None, seed: int, out_root: Path, **paths: str) -> RunConfig:
    overrides = ConfigManager.seed_overrides(seed)
    overrides["paths"] = {"out_dir": str(out_root / f"seed{seed}"), **paths}
    return ConfigManager().load(config_file, overrides)


def _mean_abs_ra(scores_csv: Path) -> float:
    with open(scores_csv, encoding="utf-8") as f:
        rows = list(csv.DictReader(line for line in f if not line.startswith("#")))
    return float(np.mean([abs(float(r["R_A"])) for r in rows]))


def run_seed(config_file: str | None, seed: int, out_root: Path, window: int, ablation: bool) -> dict:
    config = _seed_config(config_file, seed, out_root)
    cmd_synth(config)
    cmd_concepts(config)
    cmd_priors(config)
    cmd_pretrain(config)
    cold = cmd_restore(config, checkpoint=config.paths.resolve("pretrain_checkpoint"), deterministic=True)
    cmd_rpo(config)
    refined = cmd_restore(config, deterministic=True)
    summary = window_summary(read_metrics_csv(Path(config.paths.out_dir) / RPO_METRICS_CSV), window)

    result = {
        "seed": seed,
        "metrics_csv": str(Path(config.paths.out_dir) / RPO_METRICS_CSV),
        "first_mean": summary.first_mean,
        "last_mean": summary.last_mean,
        "var_ratio": summary.var_ratio,
        "improved": summary.improved,
        "psnr_smoky": cold.mean_psnr_input,
        "psnr_cold": cold.mean_psnr,
        "psnr_refined": refined.mean_psnr,
    }

    if ablation:
        corpus = config.paths.resolve("corpus_dir").resolve()
        full_scores = cmd_score(config, refined.out_dir, input_dir=corpus / "smoky")
        result["ra_full"] = _mean_abs_ra(full_scores)

        base = Path(config.paths.out_dir).resolve()
        shared = {
            "corpus_dir": str(corpus),
            "pretrain_checkpoint": str(base / config.paths.pretrain_checkpoint),
            "priors": str(base / config.paths.priors),
            "concepts": str(base / config.paths.concepts),
        }
        no_pg = _seed_config(config_file, seed, out_root / "no_pg", **shared)
        cmd_rpo(no_pg, ablations=["pg"])
        ablated = cmd_restore(no_pg, deterministic=True)
        ablated_scores = cmd_score(no_pg, Path(no_pg.paths.out_dir) / RESTORE_DIR, input_dir=corpus / "smoky")
        result["ra_no_pg"] = _mean_abs_ra(ablated_scores)
    return result


def run_all_benchmarks(config_file: str | None, seeds: list[int], out_root: Path, window: int, ablation: bool) -> int:
    print(f"Running {len(seeds)} seeds")
    results_data = []
    errors = []
    for seed in seeds:
        print(f"Running seed {seed}...", flush=True)
        try:
            results_data.append(run_seed(config_file, seed, out_root, window, ablation))
        except Exception as e:
            print(f"ERROR running seed {seed}: {e}", file=sys.stderr, flush=True)
            traceback.print_exc(file=sys.stderr)
            errors.append({"name": f"seed{seed}", "error": str(e)})

    ARTIFACTS.mkdir(parents=True, exist_ok=True)
    if results_data:
        _generate_plots(results_data, window)
    else:
        print("WARNING: No runs completed to plot.", file=sys.stderr, flush=True)
    _generate_report(results_data, errors)
    return 1 if errors else 0


def _generate_plots(results_data: list[dict], window: int) -> None:
    """Overlayed reward curves and per-seed PSNR bars."""
    plot_reward_curves(
        [r["metrics_csv"] for r in results_data],
        ARTIFACTS / "reward_curves.png",
        window=max(1, window // 2),
        labels=[f"seed {r['seed']}" for r in results_data],
    )

    x = np.arange(len(results_data))
    fig, ax = plt.subplots(figsize=(10, 5))
    for offset, (key, label, color) in enumerate(
        [
            ("psnr_smoky", "Smoky input", "#CE9178"),
            ("psnr_cold", "Cold start", "#569CD6"),
            ("psnr_refined", "Refined", "#4EC9B0"),
        ]
    ):
        ax.bar(x + (offset - 1) * 0.27, [r[key] or 0.0 for r in results_data], width=0.27, label=label, color=color)
    ax.set_xticks(x)
    ax.set_xticklabels([f"seed {r['seed']}" for r in results_data])
    ax.set_ylabel("PSNR (dB)")
    ax.set_title("Validation PSNR")
    ax.legend()
    ax.grid(axis="y", linestyle="--", alpha=0.3)
    plt.tight_layout()
    graph_path = ARTIFACTS / "psnr_comparison.png"
    plt.savefig(graph_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    print(f"Graph saved to {graph_path}")


def _generate_report(results_data: list[dict], errors: list[dict]) -> None:
    full_path = ARTIFACTS / "benchmark_results.md"
    with open(full_path, "w", encoding="utf-8") as f:
        f.write("# Desk-Scale Trend Results\n\n")
        f.write("![Reward Curves](reward_curves.png)\n\n")
        f.write("![PSNR Comparison](psnr_comparison.png)\n\n")
        _write_table(f, results_data)
        _write_errors(f, errors)
    print(f"Report saved to {full_path}")


def _fmt(value: float | None, spec: str = ".2f") -> str:
    return "n/a" if value is None else format(value, spec)


def _write_table(f, results_data: list[dict]) -> None:
    """Write the per-seed metrics table to a file handle."""
    f.write("## Per-Seed Metrics\n\n")
    f.write(
        "| Seed | Reward (first) | Reward (last) | Improved | Var ratio "
        "| PSNR smoky | PSNR cold | PSNR refined | mean abs R_A | mean abs R_A (no pg) |\n"
    )
    f.write("|------|----------------|---------------|----------|-----------|------------|-----------|--------------|------|------|\n")
    if not results_data:
        f.write("| *No runs completed successfully* | | | | | | | | | |\n")
        return
    for r in results_data:
        f.write(
            f"| {r['seed']} | {r['first_mean']:.4f} | {r['last_mean']:.4f} | "
            f"{'yes' if r['improved'] else 'no'} | {r['var_ratio']:.3f} | "
            f"{_fmt(r['psnr_smoky'])} | {_fmt(r['psnr_cold'])} | {_fmt(r['psnr_refined'])} | "
            f"{_fmt(r.get('ra_full'), '.4f')} | {_fmt(r.get('ra_no_pg'), '.4f')} |\n"
        )


def _write_errors(f, errors: list[dict]) -> None:
    """Write an error table to a file handle."""
    if not errors:
        return
    f.write("\n## Errors\n\n")
    f.write("| Run | Error |\n")
    f.write("|-----|-------|\n")
    for e in errors:
        safe_error = e["error"].replace("|", "\\|")
        f.write(f"| {e['name']} | {safe_error} |\n")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Multi-seed desk-scale trend runner")
    parser.add_argument("--config", "-c", type=str, default="config.yaml")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--out", type=str, default="runs/trends")
    parser.add_argument("--window", type=int, default=20)
    parser.add_argument("--ablation", action="store_true", help="Also refine without the physics reward")
    args = parser.parse_args()
    sys.exit(run_all_benchmarks(args.config, args.seeds, Path(args.out), args.window, args.ablation))

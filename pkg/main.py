#!/usr/bin/env python3
"""
Smoke-RPO - Reward-guided diffusion policy optimization for smoke removal

Desk-scale toolkit that synthesizes smoky/clean tissue patches, pretrains a
small conditional diffusion restorer on them and then refines it with
group-relative policy optimization driven by physics-prior, concept-embedding
and reference-free quality rewards.

Stages:
- synth     generate the paired corpus (scattering-model smoke)
- concepts  fit the "clear"/"smoky" concept pair
- priors    estimate inter-channel reference statistics
- pretrain  supervised cold start on the paired train split
- rpo       reward-guided refinement on unpaired smoky inputs
- score     per-image reward breakdown of a directory
- restore   restore smoky images, PSNR when clean references exist
- report    reward curves and convergence summaries

Usage Examples:
    python main.py synth --config config.yaml
    python main.py pretrain --config config.yaml --seed 1
    python main.py rpo --config config.yaml --no-vc
"""

import argparse
import logging
from pathlib import Path
import sys
from typing import Any

from src.cli import (
    cmd_concepts,
    cmd_pretrain,
    cmd_priors,
    cmd_report,
    cmd_restore,
    cmd_rpo,
    cmd_score,
    cmd_synth,
)
from src.config import ConfigManager, RunConfig
from src.exceptions import SmokeRpoError, exit_code_for, handle_smoke_rpo_error

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger("smoke_rpo")


def _common_arguments() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        "-c",
        type=str,
        help="Configuration file path (default: use built-in defaults)",
    )
    common.add_argument("--seed", type=int, help="Override every seed in the configuration")
    common.add_argument("--out", "-o", type=str, help="Output directory (overrides paths.out_dir)")
    common.add_argument("--force", action="store_true", help="Regenerate outputs that already exist")
    common.add_argument("--debug", action="store_true", help="Enable debug logging")
    return common


def create_argument_parser() -> argparse.ArgumentParser:
    """Create and configure argument parser."""
    common = _common_arguments()
    parser = argparse.ArgumentParser(
        prog="smoke-rpo",
        description="Reward-guided diffusion policy optimization for smoke removal",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s synth --config config.yaml
  %(prog)s concepts --config config.yaml
  %(prog)s priors --config config.yaml
  %(prog)s pretrain --config config.yaml --resume
  %(prog)s rpo --config config.yaml --seed 3 --no-pg
  %(prog)s restore --config config.yaml --deterministic
  %(prog)s report --config config.yaml
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="Generate the paired smoky/clean corpus")
    sub.add_parser("concepts", parents=[common], help="Train the clear/smoky concept pair")
    sub.add_parser("priors", parents=[common], help="Build inter-channel prior reference")

    p = sub.add_parser("pretrain", parents=[common], help="Supervised cold start")
    p.add_argument("--resume", action="store_true", help="Continue from the existing checkpoint")

    p = sub.add_parser("rpo", parents=[common], help="Reward-guided policy refinement")
    p.add_argument("--no-pg", action="store_true", help="Zero the physics-guided reward weight")
    p.add_argument("--no-rf", action="store_true", help="Zero the reference-free quality weight")
    p.add_argument("--no-vc", action="store_true", help="Zero the concept reward weight")

    p = sub.add_parser("score", parents=[common], help="Per-image reward breakdown")
    p.add_argument("image_dir", type=str, help="Directory of PPM images to score")
    p.add_argument("--inputs", type=str, help="Directory of same-named smoky inputs")

    p = sub.add_parser("restore", parents=[common], help="Restore smoky images")
    p.add_argument("smoky_dir", nargs="?", help="Directory of smoky PPMs (default: corpus val split)")
    p.add_argument("--checkpoint", type=str, help="Checkpoint path (default: rpo, else pretrain)")
    p.add_argument("--deterministic", action="store_true", help="Zero all injected noise")

    p = sub.add_parser("report", parents=[common], help="Reward curves and window summaries")
    p.add_argument("csv", nargs="*", help="Metrics CSVs (default: the run's rpo metrics)")
    p.add_argument("--window", type=int, default=20, help="Summary window in iterations")

    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides.update(ConfigManager.seed_overrides(args.seed))
    if args.out:
        overrides["paths"] = {"out_dir": args.out}
    if args.debug:
        overrides["logging"] = {"level": "DEBUG"}
    return overrides


def setup_logging(config: RunConfig) -> None:
    """Root logging from the ``logging`` section."""
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if config.logging.log_file:
        log_path = Path(config.logging.log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_path))
    logging.basicConfig(level=config.logging.level.value, format=LOG_FORMAT, handlers=handlers, force=True)


def run_command(args: argparse.Namespace, config: RunConfig) -> None:
    """Dispatch a parsed command line."""
    if args.command == "synth":
        manifest = cmd_synth(config, force=args.force)
        print(f"Corpus: {manifest['n']} pairs, hash {manifest['corpus_hash'][:16]}")
    elif args.command == "concepts":
        pair = cmd_concepts(config)
        print(f"Concepts: final match loss {pair.metadata['final_loss']:.4f}")
    elif args.command == "priors":
        ref = cmd_priors(config)
        print(f"Priors: MRG={ref.mrg:.4f} MRB={ref.mrb:.4f} MGB={ref.mgb:.4f}")
    elif args.command == "pretrain":
        outcome = cmd_pretrain(config, resume=args.resume)
        print(f"Checkpoint: {outcome.checkpoint} ({outcome.rows} steps)")
    elif args.command == "rpo":
        ablations = [name for name in ("pg", "rf", "vc") if getattr(args, f"no_{name}")]
        outcome = cmd_rpo(config, ablations)
        print(f"Checkpoint: {outcome.checkpoint}; metrics: {outcome.metrics_csv}")
    elif args.command == "score":
        print(f"Scores: {cmd_score(config, args.image_dir, args.inputs)}")
    elif args.command == "restore":
        outcome = cmd_restore(
            config, args.smoky_dir, args.checkpoint, deterministic=True if args.deterministic else None
        )
        print(f"Restored {outcome.count} images to {outcome.out_dir}")
        if outcome.mean_psnr is not None:
            print(f"  PSNR: {outcome.mean_psnr_input:.2f} dB -> {outcome.mean_psnr:.2f} dB")
    elif args.command == "report":
        report = cmd_report(config, args.csv or None, window=args.window)
        for path, summary in report["summaries"].items():
            print(
                f"{path}: reward {summary['first_mean']:.4f} -> {summary['last_mean']:.4f}, "
                f"variance ratio {summary['var_ratio']:.3f}"
            )


def main(argv: list[str] | None = None) -> int:
    """Main entry point."""
    parser = create_argument_parser()
    args = parser.parse_args(argv)

    try:
        config = ConfigManager().load(args.config, _overrides(args))
        setup_logging(config)
        logger.debug(f"Configuration hash {config.config_hash()}")
        run_command(args, config)
        return 0

    except KeyboardInterrupt:
        print("\nInterrupted by user")
        return 1
    except SmokeRpoError as e:
        info = handle_smoke_rpo_error(e, logger)
        print(f"Error: {e}", file=sys.stderr)
        return info["exit_code"]
    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        if args.debug:
            import traceback

            traceback.print_exc()
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())

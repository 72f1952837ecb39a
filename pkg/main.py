"""
CACRL Scheduler - Entry Point

Trains context-aware constrained RL power schedulers on the simulated XR
downlink, one run or a sweep over seeds.

    python main.py run --config cfg.json --seed 0 --variant cacrl --out runs/cacrl_0
    python main.py sweep --config cfg.json --seeds 0..9
    python main.py analyze runs
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from src.core.analysis import (
    DEFAULT_DROPOUT_THRESHOLD,
    ablation_ordering,
    constraint_satisfaction,
    load_summaries,
)
from src.core.experiment import run_experiment, run_sweep
from src.utils.config import VARIANTS, Config
from src.utils.errors import CACRLError, ConfigurationError
from src.utils.logger import setup_logger


def parse_seed_range(text: str) -> list[int]:
    """'a..b' (inclusive) or a comma-separated list of seeds."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            first, last = int(lo), int(hi)
            if last < first:
                raise ValueError
            return list(range(first, last + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed range {text!r}; use a..b or a,b,c") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cacrl", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--log-file", action="store_true", help="also log to <log dir>/cacrl_<ts>.log")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one (config, seed, variant)")
    run.add_argument("--config", type=Path, help="flat JSON config (defaults when omitted)")
    run.add_argument("--seed", type=int)
    run.add_argument("--variant", choices=VARIANTS)
    run.add_argument("--out", type=Path, help="output directory")
    run.add_argument("--iterations", type=int)
    run.add_argument("--literal-rules", "--strict-paper", dest="literal_rules", action="store_true",
                     help="KL gradient without the +1/2 variance term, step exponents (0.6, 0.7, 0.3)")

    sweep = sub.add_parser("sweep", help="independent runs over a seed range")
    sweep.add_argument("--config", type=Path)
    sweep.add_argument("--seeds", type=parse_seed_range, required=True, help="a..b inclusive")
    sweep.add_argument("--variants", type=lambda s: s.split(","), help="comma-separated variants")
    sweep.add_argument("--out", type=Path)
    sweep.add_argument("--iterations", type=int)
    sweep.add_argument("--workers", type=int, default=1)

    analyze = sub.add_parser("analyze", help="cross-seed checks over a finished sweep")
    analyze.add_argument("sweep_dir", type=Path)
    analyze.add_argument("--threshold", type=float, default=DEFAULT_DROPOUT_THRESHOLD,
                         help="per-user dropout rate a final evaluation must meet")
    return parser


def analyze_sweep(sweep_dir: Path, threshold: float, logger: logging.Logger) -> None:
    summaries = load_summaries(sweep_dir)
    for variant in sorted(summaries):
        report = constraint_satisfaction(summaries, variant, threshold)
        logger.info(
            "%s: %d/%d seeds within dropout %.3f",
            variant, len(report.satisfied_seeds), report.total_seeds, threshold,
        )
    if {"cacrl", "cacrl-minus", "cssca-crl"} <= summaries.keys():
        ablation = ablation_ordering(summaries, threshold)
        logger.info(
            "Power ordered: %s, feasibility majority: %s",
            ablation.power_ordered, ablation.feasibility_majority,
        )


def main(argv: Optional[list[str]] = None) -> int:
    """Main application entry point."""
    args = build_parser().parse_args(argv)

    logger = setup_logger(
        level=getattr(logging, args.log_level),
        log_to_file=args.log_file,
    )

    try:
        if args.command == "analyze":
            analyze_sweep(args.sweep_dir, args.threshold, logger)
            return 0

        manager = Config(args.config)
        overrides = {
            "output_dir": str(args.out) if args.out else None,
            "iterations": args.iterations,
        }
        if args.command == "run":
            overrides.update(
                seed=args.seed,
                variant=args.variant,
                literal_rules=True if args.literal_rules else None,
            )
        for key, value in overrides.items():
            if value is not None:
                manager.set(key, value)
        config = manager.experiment
        logger.debug("Output directory: %s", manager.get("output_dir"))

        if args.command == "run":
            summary = run_experiment(config)
            logger.info("Run finished: %s", summary.to_dict())
        else:
            for variant in args.variants or []:
                if variant not in VARIANTS:
                    raise ConfigurationError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
            results = run_sweep(config, args.seeds, args.variants, args.workers)
            logger.info("Sweep finished: %d runs", len(results))
    except CACRLError as exc:
        logger.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

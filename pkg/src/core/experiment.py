"""
Experiment Harness for the CACRL scheduler.

Drives the policy-iteration loop for one (config, seed), writes the
plot-ready CSV logs, periodic checkpoints and a run summary, and fans
independent runs out over seeds and variants.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..utils.config import Config, ExperimentConfig
from ..utils.errors import ExperimentAborted
from ..utils.performance import DropoutRateWindow
from .agent import CACRLAgent, EvaluationResult, IterationReport, RandomStreams, variant_dispatch
from .environment import EnvConfig, XRDownlinkEnv
from .estimators import IterationBatch
from .networks import save_checkpoint

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
ITERATIONS_FILE = "iterations.csv"
EVALUATION_FILE = "evaluation.csv"
TIMINGS_FILE = "timings.csv"
SUMMARY_FILE = "summary.json"
CHECKPOINT_DIR = "checkpoints"


@dataclass
class MetricsRow:
    """One row of metrics.csv: the training-time quantities of a policy iteration."""

    iteration: int
    phase: str
    regime_id: int
    mean_power: float
    dropout_rates: np.ndarray
    satisfied: bool
    branch: str
    mean_abs_z: float = 0.0
    mean_abs_shaping: float = 0.0

    @staticmethod
    def header(num_users: int) -> list[str]:
        return [
            "iteration", "phase", "regime_id", "mean_power_w",
            *[f"dropout_rate_{k}" for k in range(1, num_users + 1)],
            "satisfied", "branch", "mean_abs_z", "mean_abs_shaping",
        ]

    def as_row(self) -> list:
        return [
            self.iteration, self.phase, self.regime_id, float(self.mean_power),
            *[float(r) for r in self.dropout_rates],
            int(self.satisfied), self.branch, float(self.mean_abs_z), float(self.mean_abs_shaping),
        ]


def compute_metrics(
    batch: IterationBatch,
    window: DropoutRateWindow,
    max_dropout_rate: float,
    iteration: int = 0,
    phase: str = "",
    branch: str = "",
) -> MetricsRow:
    """
    Mean power of the batch and windowed per-user dropout rates.

    The batch's drops and resolutions are pushed into ``window`` first; the
    rate is dropped / (served or dropped) over the window, 0 when empty.
    """
    dropped = np.sum([t.dropouts for t in batch.tuples], axis=0).astype(np.int64)
    resolved = np.sum([t.resolved for t in batch.tuples], axis=0).astype(np.int64)
    rates = window.push(dropped, resolved)
    shaping = np.stack([t.shaping[1:] for t in batch.tuples])
    return MetricsRow(
        iteration=iteration,
        phase=phase,
        regime_id=batch.tuples[-1].regime_id,
        mean_power=float(batch.powers().mean()),
        dropout_rates=rates,
        satisfied=bool(np.all(rates <= max_dropout_rate)),
        branch=branch,
        mean_abs_shaping=float(np.abs(shaping).mean()) if shaping.size else 0.0,
    )


def _iterations_header(num_users: int) -> list[str]:
    K = num_users
    return [
        "iteration", "phase",
        *[f"f_hat_{k}" for k in range(K + 1)],
        "max_violation", "branch", "dual_iterations", "mu", "eta", "upsilon",
        "theta_sha256", "mean_kl",
        *[f"mean_abs_residual_{k}" for k in range(K + 1)],
        *[f"mean_abs_shaping_{k}" for k in range(1, K + 1)],
    ]


def _iterations_row(report: IterationReport) -> list:
    return [
        report.iteration, report.phase,
        *[float(f) for f in report.f_hat],
        report.max_violation, report.branch, report.dual_iterations,
        report.mu, report.eta, report.upsilon,
        report.theta_checksum, report.mean_kl,
        *[float(r) for r in report.mean_residuals],
        *[float(s) for s in report.mean_abs_shaping],
    ]


def _evaluation_header(num_users: int) -> list[str]:
    return [
        "iteration", "slots", "mean_power_w",
        *[f"dropout_rate_{k}" for k in range(1, num_users + 1)],
        "satisfied",
    ]


def evaluate_policy(agent: CACRLAgent, slots: Optional[int] = None) -> EvaluationResult:
    """Frozen-policy pass on a fresh environment from the evaluation stream."""
    slots = agent.config.eval_slots if slots is None else slots
    return agent.evaluate(slots, agent.streams.evaluation_rng())


@dataclass
class RunSummary:
    """Outcome of one run, mirrored to summary.json."""

    variant: str
    seed: int
    iterations: int
    output_dir: str
    first_feasible_iteration: Optional[int] = None
    first_feasible_evaluation: Optional[int] = None
    final_evaluation: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "seed": self.seed,
            "iterations": self.iterations,
            "output_dir": self.output_dir,
            "first_feasible_iteration": self.first_feasible_iteration,
            "first_feasible_evaluation": self.first_feasible_evaluation,
            "final_evaluation": self.final_evaluation,
        }


def build_agent(config: ExperimentConfig) -> CACRLAgent:
    """Seeded environment plus the agent for ``config.variant``."""
    streams = RandomStreams.from_seed(config.seed)
    env = XRDownlinkEnv(EnvConfig.from_experiment(config), streams.env)
    return variant_dispatch(config.variant, config, env, streams)


def run_experiment(config: ExperimentConfig) -> RunSummary:
    """
    Run the full policy-iteration loop for one configuration.

    Writes to ``config.output_dir``: config.json, metrics.csv,
    iterations.csv, evaluation.csv, timings.csv, checkpoints/ and
    summary.json. Every row is flushed as it is written.

    Raises:
        ExperimentAborted: on any error inside an iteration, after the
            partial logs are on disk
    """
    config.validate()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    Config.from_experiment(config).save(out / "config.json")

    agent = build_agent(config)
    K = config.num_users
    window = DropoutRateWindow(K, config.metrics_window)
    summary = RunSummary(config.variant, config.seed, config.iterations, str(out))

    logger.info(
        "Run %s seed=%d K=%d M=%d scenario=%s/%s iterations=%d -> %s",
        config.variant, config.seed, K, config.num_antennas, config.scenario,
        config.packet_regime, config.iterations, out,
    )

    with ExitStack() as stack:
        files = {
            name: stack.enter_context(open(out / name, "w", newline=""))
            for name in (METRICS_FILE, ITERATIONS_FILE, EVALUATION_FILE, TIMINGS_FILE)
        }
        writers = {name: csv.writer(f) for name, f in files.items()}
        writers[METRICS_FILE].writerow(MetricsRow.header(K))
        writers[ITERATIONS_FILE].writerow(_iterations_header(K))
        writers[EVALUATION_FILE].writerow(_evaluation_header(K))
        writers[TIMINGS_FILE].writerow(["iteration", "collection_ms", "critic_ms", "actor_ms", "total_ms"])

        for i in range(1, config.iterations + 1):
            try:
                report = agent.step()
            except Exception as exc:
                for f in files.values():
                    f.flush()
                logger.error("Iteration %d failed: %s", i, exc)
                raise ExperimentAborted(i, exc) from exc

            row = compute_metrics(
                report.batch, window, config.max_dropout_rate, i, report.phase, report.branch
            )
            row.mean_abs_z = report.mean_abs_z
            writers[METRICS_FILE].writerow(row.as_row())
            writers[ITERATIONS_FILE].writerow(_iterations_row(report))
            timing = agent.profiler.get_timing()
            writers[TIMINGS_FILE].writerow([
                i, round(timing.collection_ms, 3), round(timing.critic_ms, 3),
                round(timing.actor_ms, 3), round(timing.total_ms, 3),
            ])
            if row.satisfied and summary.first_feasible_iteration is None:
                summary.first_feasible_iteration = i

            last = i == config.iterations
            if (config.eval_every and i % config.eval_every == 0) or last:
                result = evaluate_policy(agent)
                writers[EVALUATION_FILE].writerow([
                    i, result.slots, result.mean_power,
                    *[float(r) for r in result.dropout_rates], int(result.satisfied),
                ])
                logger.info(
                    "Evaluation at %d: power=%.4f W dropout=%s satisfied=%s",
                    i, result.mean_power, np.round(result.dropout_rates, 4), result.satisfied,
                )
                if result.satisfied and summary.first_feasible_evaluation is None:
                    summary.first_feasible_evaluation = i
                if last:
                    summary.final_evaluation = {
                        "mean_power_w": result.mean_power,
                        "dropout_rates": [float(r) for r in result.dropout_rates],
                        "satisfied": result.satisfied,
                    }

            if (config.checkpoint_every and i % config.checkpoint_every == 0) or last:
                save_checkpoint(out / CHECKPOINT_DIR / f"iter_{i:05d}.ckpt", agent.named_params())

            for f in files.values():
                f.flush()

    with open(out / SUMMARY_FILE, "w") as f:
        json.dump(summary.to_dict(), f, indent=2, sort_keys=True)
    return summary


def _run_one(config_dict: dict) -> dict:
    return run_experiment(ExperimentConfig.from_dict(config_dict)).to_dict()


def run_sweep(
    config: ExperimentConfig,
    seeds: Sequence[int],
    variants: Optional[Sequence[str]] = None,
    max_workers: Optional[int] = 1,
) -> list[dict]:
    """
    Independent runs over (variant, seed), one subdirectory each.

    Runs share no state; with ``max_workers`` > 1 they execute in worker
    processes. Results come back in (variant, seed) order.
    """
    variants = list(variants) if variants else [config.variant]
    jobs = []
    for variant in variants:
        for seed in seeds:
            out = Path(config.output_dir) / variant / f"seed_{seed}"
            jobs.append(config.with_overrides(variant=variant, seed=seed, output_dir=str(out)))
    for job in jobs:
        job.validate()

    logger.info("Sweep: %d runs (%s) over seeds %s", len(jobs), ", ".join(variants), list(seeds))
    if not max_workers or max_workers <= 1:
        return [run_experiment(job).to_dict() for job in jobs]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_run_one, [job.to_dict() for job in jobs]))

"""
Sweep Analysis for the CACRL scheduler.

Reads the summary.json of every run in a sweep directory and checks the
cross-seed properties: constraint satisfaction of the frozen policies and
the ordering of the ablation variants.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..utils.errors import ConfigurationError
from .experiment import SUMMARY_FILE

logger = logging.getLogger(__name__)

# Dropout level the frozen policy is judged against (c_k plus slack)
DEFAULT_DROPOUT_THRESHOLD = 0.12


def load_summaries(sweep_dir: Path) -> dict[str, dict[int, dict]]:
    """
    Collect run summaries laid out as <sweep_dir>/<variant>/seed_<s>/summary.json.

    Returns:
        {variant: {seed: summary}}
    """
    sweep_dir = Path(sweep_dir)
    if not sweep_dir.is_dir():
        raise ConfigurationError(f"sweep directory not found: {sweep_dir}")
    out: dict[str, dict[int, dict]] = {}
    for path in sorted(sweep_dir.glob(f"*/seed_*/{SUMMARY_FILE}")):
        with open(path) as f:
            summary = json.load(f)
        out.setdefault(summary["variant"], {})[int(summary["seed"])] = summary
    if not out:
        raise ConfigurationError(f"no {SUMMARY_FILE} files under {sweep_dir}")
    return out


def final_satisfied(summary: dict, threshold: float = DEFAULT_DROPOUT_THRESHOLD) -> bool:
    """Whether every user's final frozen-policy dropout rate is within ``threshold``."""
    rates = summary.get("final_evaluation", {}).get("dropout_rates")
    if rates is None:
        return False
    return bool(np.all(np.asarray(rates, dtype=float) <= threshold))


def _first_feasible(summary: dict) -> float:
    value = summary.get("first_feasible_evaluation")
    return math.inf if value is None else float(value)


@dataclass
class SatisfactionReport:
    """Seeds of one variant whose final evaluation meets the dropout threshold."""

    variant: str
    threshold: float
    satisfied_seeds: list[int]
    total_seeds: int

    @property
    def fraction(self) -> float:
        return len(self.satisfied_seeds) / self.total_seeds if self.total_seeds else 0.0

    def meets(self, required: int) -> bool:
        return len(self.satisfied_seeds) >= required


def constraint_satisfaction(
    summaries: dict[str, dict[int, dict]],
    variant: str = "cacrl",
    threshold: float = DEFAULT_DROPOUT_THRESHOLD,
) -> SatisfactionReport:
    """Count the seeds of ``variant`` that end within the dropout threshold."""
    runs = summaries.get(variant)
    if not runs:
        raise ConfigurationError(f"no runs of variant {variant!r} in the sweep")
    satisfied = sorted(seed for seed, s in runs.items() if final_satisfied(s, threshold))
    return SatisfactionReport(variant, threshold, satisfied, len(runs))


@dataclass
class AblationReport:
    """
    Paired-seed comparison of the three variants.

    Power is compared only over seeds where both cacrl and cssca-crl end
    feasible; feasibility speed counts seeds where cacrl reaches its first
    feasible evaluation no later than cacrl-minus (never = inf).
    """

    threshold: float
    power_seeds: list[int]
    cacrl_power: Optional[float]
    cssca_power: Optional[float]
    faster_seeds: list[int]
    paired_seeds: list[int]

    @property
    def power_ordered(self) -> bool:
        """True when no seed pair is comparable, or cacrl uses no more power on average."""
        if not self.power_seeds:
            return True
        return self.cacrl_power <= self.cssca_power

    @property
    def feasibility_majority(self) -> bool:
        return 2 * len(self.faster_seeds) > len(self.paired_seeds)


def ablation_ordering(
    summaries: dict[str, dict[int, dict]],
    threshold: float = DEFAULT_DROPOUT_THRESHOLD,
) -> AblationReport:
    """Directional comparison of cacrl against cssca-crl (power) and cacrl-minus (feasibility)."""
    missing = [v for v in ("cacrl", "cacrl-minus", "cssca-crl") if v not in summaries]
    if missing:
        raise ConfigurationError(f"ablation needs every variant; missing {missing}")
    full, minus, plain = summaries["cacrl"], summaries["cacrl-minus"], summaries["cssca-crl"]

    power_seeds = sorted(
        seed for seed in full.keys() & plain.keys()
        if final_satisfied(full[seed], threshold) and final_satisfied(plain[seed], threshold)
    )
    cacrl_power = cssca_power = None
    if power_seeds:
        cacrl_power = float(np.mean([full[s]["final_evaluation"]["mean_power_w"] for s in power_seeds]))
        cssca_power = float(np.mean([plain[s]["final_evaluation"]["mean_power_w"] for s in power_seeds]))

    paired = sorted(full.keys() & minus.keys())
    faster = [s for s in paired if _first_feasible(full[s]) <= _first_feasible(minus[s])]

    report = AblationReport(threshold, power_seeds, cacrl_power, cssca_power, faster, paired)
    logger.info(
        "Ablation: power over %d seeds cacrl=%s cssca-crl=%s; cacrl feasible no later on %d/%d seeds",
        len(power_seeds), cacrl_power, cssca_power, len(faster), len(paired),
    )
    return report

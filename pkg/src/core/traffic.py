"""
XR Traffic Module for the XR scheduler.

Regime-switching packet arrivals: in each regime user k receives a packet
with probability P_k per slot, of Poisson(lambda_k) bits. Regimes are
redrawn from the scenario ranges with probability 1/E per slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..utils.errors import ConfigurationError


class PacketRegime(Enum):
    """Packet-size scenarios: (arrival probability range, mean length range in bits)."""

    SHORT = "short"
    MEDIUM = "medium"
    LARGE = "large"
    WIDE = "wide"

    @property
    def ranges(self) -> "TrafficRanges":
        return _REGIME_RANGES[self]


@dataclass(frozen=True)
class TrafficRanges:
    """Uniform sampling ranges for P_k and lambda_k."""

    prob_low: float
    prob_high: float
    bits_low: float
    bits_high: float

    def validate(self) -> "TrafficRanges":
        if not 0.0 < self.prob_low <= self.prob_high < 1.0:
            raise ConfigurationError(
                f"arrival probability range must lie in (0, 1), got [{self.prob_low}, {self.prob_high}]"
            )
        if not 0.0 < self.bits_low <= self.bits_high:
            raise ConfigurationError(
                f"mean packet length range must be positive, got [{self.bits_low}, {self.bits_high}]"
            )
        return self


_REGIME_RANGES = {
    PacketRegime.SHORT: TrafficRanges(0.6, 0.8, 5e3, 10e3),
    PacketRegime.MEDIUM: TrafficRanges(0.4, 0.6, 10e3, 15e3),
    PacketRegime.LARGE: TrafficRanges(0.2, 0.4, 15e3, 20e3),
    PacketRegime.WIDE: TrafficRanges(0.2, 0.8, 5e3, 20e3),
}


@dataclass(frozen=True)
class TrafficRegime:
    """Arrival dynamics of one regime; regime_id is the latent ground truth."""

    arrival_probs: np.ndarray   # P_k
    mean_bits: np.ndarray       # lambda_k
    regime_id: int = 0

    def __post_init__(self):
        probs = np.asarray(self.arrival_probs, dtype=float)
        means = np.asarray(self.mean_bits, dtype=float)
        if np.any(probs <= 0) or np.any(probs >= 1):
            raise ConfigurationError(f"arrival probabilities must lie in (0, 1), got {probs}")
        if np.any(means <= 0):
            raise ConfigurationError(f"mean packet lengths must be positive, got {means}")
        object.__setattr__(self, "arrival_probs", probs)
        object.__setattr__(self, "mean_bits", means)

    @property
    def num_users(self) -> int:
        return len(self.arrival_probs)

    @property
    def offered_load_bits(self) -> np.ndarray:
        """Expected arriving bits per slot, per user."""
        return self.arrival_probs * self.mean_bits


def sample_regime(
    rng: np.random.Generator,
    ranges: TrafficRanges,
    num_users: int,
    regime_id: int = 0,
) -> TrafficRegime:
    """Draw P_k and lambda_k uniformly from the scenario ranges."""
    ranges.validate()
    return TrafficRegime(
        arrival_probs=rng.uniform(ranges.prob_low, ranges.prob_high, size=num_users),
        mean_bits=rng.uniform(ranges.bits_low, ranges.bits_high, size=num_users),
        regime_id=regime_id,
    )


def traffic_process_step(
    regime: TrafficRegime,
    rng: np.random.Generator,
    mean_slots: float,
    ranges: TrafficRanges,
) -> TrafficRegime:
    """
    Advance the regime process by one slot.

    With probability 1/E the regime is redrawn and its id incremented;
    E = inf keeps the regime forever (no random draw is consumed).

    Args:
        regime: Current regime
        rng: Seeded random stream
        mean_slots: Mean sojourn E (>= 1, or inf)
        ranges: Scenario sampling ranges

    Returns:
        Next regime
    """
    if math.isinf(mean_slots):
        return regime
    if mean_slots < 1:
        raise ConfigurationError(f"mean regime duration must be >= 1 slot, got {mean_slots}")
    if rng.random() < 1.0 / mean_slots:
        return sample_regime(rng, ranges, regime.num_users, regime.regime_id + 1)
    return regime


def draw_arrivals(regime: TrafficRegime, rng: np.random.Generator) -> list[Optional[int]]:
    """Bernoulli(P_k) arrival of a Poisson(lambda_k)-bit packet for every user."""
    arrive = rng.random(regime.num_users) < regime.arrival_probs
    lengths = rng.poisson(regime.mean_bits)
    return [int(n) if hit else None for hit, n in zip(arrive, lengths)]

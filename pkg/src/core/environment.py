"""
XR Downlink Environment for the CACRL scheduler.

Composes precoding, rates, queue service, the traffic regime process and
the channel draw into one slot transition of the scheduling CMDP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from ..utils.errors import ConfigurationError
from .channel import (
    ChannelConfig,
    ChannelMatrix,
    compute_rates,
    draw_mean_aods,
    generate_channel,
    noise_power_watts,
    rzf_precoder,
)
from .queues import QueueState, ServiceReport, serve_queues
from .traffic import (
    PacketRegime,
    TrafficRanges,
    TrafficRegime,
    draw_arrivals,
    sample_regime,
    traffic_process_step,
)

if TYPE_CHECKING:
    from ..utils.config import ExperimentConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Action:
    """Scheduled powers (watts) and the RZF regularization factor."""

    powers: np.ndarray
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "powers", np.asarray(self.powers, dtype=float))

    def validate(self, p_max: Optional[float] = None) -> "Action":
        if np.any(self.powers < 0):
            raise ConfigurationError(f"powers must be nonnegative, got {self.powers}")
        if p_max is not None and np.any(self.powers > p_max):
            raise ConfigurationError(f"powers exceed p_max={p_max}: {self.powers}")
        if not self.eps > 0:
            raise ConfigurationError(f"regularization factor must be positive, got {self.eps}")
        return self

    @property
    def total_power(self) -> float:
        return float(self.powers.sum())


@dataclass
class CostSignal:
    """Per-slot costs: power R, dropouts C_k, shifted C'_k = C_k - c_k, C'_0 = R."""

    power: float
    dropouts: np.ndarray
    constraint_costs: np.ndarray
    service: Optional[ServiceReport] = None

    @property
    def objective_cost(self) -> float:
        return self.power

    @property
    def all_costs(self) -> np.ndarray:
        """[C'_0, C'_1, ..., C'_K]."""
        return np.concatenate([[self.power], self.constraint_costs])


@dataclass
class EnvState:
    """Full simulator state of one slot."""

    queues: QueueState
    channel: ChannelMatrix
    regime: TrafficRegime
    mean_aods: np.ndarray
    slot: int = 0


@dataclass(frozen=True)
class EnvConfig:
    """Scenario parameters consumed by the environment."""

    channel: ChannelConfig
    ranges: TrafficRanges
    deadlines: tuple[int, ...]
    max_dropout_rates: tuple[float, ...]
    mean_regime_slots: float = float("inf")
    slot_seconds: float = 1e-3
    bandwidth_hz: float = 10e6
    noise_density_dbm_hz: float = -100.0
    p_max: float = 4.0
    bits_scale: float = 1e-4

    @property
    def num_users(self) -> int:
        return self.channel.num_users

    @property
    def noise_power(self) -> float:
        return noise_power_watts(self.noise_density_dbm_hz, self.bandwidth_hz)

    @property
    def state_dim(self) -> int:
        return 2 * sum(self.deadlines) + 2 * self.channel.num_users * self.channel.num_antennas

    @classmethod
    def from_experiment(cls, config: "ExperimentConfig") -> "EnvConfig":
        return cls(
            channel=ChannelConfig.from_experiment(config),
            ranges=PacketRegime(config.packet_regime).ranges,
            deadlines=tuple(config.deadlines),
            max_dropout_rates=(config.max_dropout_rate,) * config.num_users,
            mean_regime_slots=config.regime_mean_slots,
            slot_seconds=config.slot_seconds,
            bandwidth_hz=config.bandwidth_hz,
            noise_density_dbm_hz=config.noise_density_dbm_hz,
            p_max=config.p_max,
            bits_scale=config.bits_scale,
        )


def observe(state: EnvState, config: EnvConfig) -> np.ndarray:
    """Observable state s_t: scaled vec(B_t) followed by real/imag parts of H_t."""
    return np.concatenate([
        state.queues.features(config.bits_scale),
        state.channel.features(config.channel.amplitude_scale),
    ])


def env_step(
    state: EnvState,
    action: Action,
    rng: np.random.Generator,
    config: EnvConfig,
) -> tuple[EnvState, CostSignal]:
    """
    One slot of the downlink CMDP.

    Precode with RZF(eps), compute rates, serve/expire/admit the queues,
    advance the traffic regime and draw the next channel.

    Args:
        state: Current state
        action: Powers and regularization factor
        rng: Environment random stream
        config: Scenario parameters

    Returns:
        (next state, cost signal)
    """
    action.validate(config.p_max)

    V = rzf_precoder(state.channel, action.eps)
    rates = compute_rates(state.channel, V, action.powers, config.noise_power, config.bandwidth_hz)

    arrivals = draw_arrivals(state.regime, rng)
    queues, report = serve_queues(state.queues, rates, arrivals, config.slot_seconds)

    regime = traffic_process_step(state.regime, rng, config.mean_regime_slots, config.ranges)
    if regime.regime_id != state.regime.regime_id:
        logger.debug("Traffic regime %d -> %d at slot %d", state.regime.regime_id,
                     regime.regime_id, state.slot)

    channel = generate_channel(rng, config.channel, state.mean_aods)

    dropouts = report.dropout.astype(float)
    cost = CostSignal(
        power=action.total_power,
        dropouts=dropouts,
        constraint_costs=dropouts - np.asarray(config.max_dropout_rates),
        service=report,
    )
    next_state = EnvState(
        queues=queues,
        channel=channel,
        regime=regime,
        mean_aods=state.mean_aods,
        slot=state.slot + 1,
    )
    return next_state, cost


class XRDownlinkEnv:
    """
    Seeded simulator of the XR downlink.

    Owns its random stream, so two instances built from the same seed and
    fed the same actions produce identical trajectories.
    """

    def __init__(self, config: EnvConfig, rng: np.random.Generator):
        """
        Initialize the environment.

        Args:
            config: Scenario parameters
            rng: Dedicated random stream for traffic and channels
        """
        self.config = config
        self._rng = rng
        self._state: Optional[EnvState] = None

    @property
    def state(self) -> EnvState:
        if self._state is None:
            raise RuntimeError("environment not reset")
        return self._state

    @property
    def state_dim(self) -> int:
        return self.config.state_dim

    @property
    def num_users(self) -> int:
        return self.config.num_users

    def reset(self) -> np.ndarray:
        """Empty queues, fresh geometry, first regime; returns s_0."""
        K = self.config.num_users
        mean_aods = draw_mean_aods(self._rng, K)
        regime = sample_regime(self._rng, self.config.ranges, K, regime_id=0)
        channel = generate_channel(self._rng, self.config.channel, mean_aods)
        self._state = EnvState(
            queues=QueueState.empty(self.config.deadlines),
            channel=channel,
            regime=regime,
            mean_aods=mean_aods,
        )
        return self.observe()

    def observe(self) -> np.ndarray:
        return observe(self.state, self.config)

    def step(self, action: Action) -> tuple[np.ndarray, CostSignal]:
        """Apply an action; returns (s_{t+1}, cost)."""
        self._state, cost = env_step(self.state, action, self._rng, self.config)
        return self.observe(), cost

"""
Configuration Management for the CACRL scheduler.

Provides a flat experiment configuration with every simulation default
embedded, JSON persistence, and validation of cross-field invariants.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigurationError

VARIANTS = ("cacrl", "cacrl-minus", "cssca-crl")
SCENARIOS = ("stationary", "nonstationary")
PACKET_REGIMES = ("short", "medium", "large", "wide")

# Literal-rule step exponents (mu, eta, upsilon); they violate the
# mu/eta ordering required for convergence and are only used with literal_rules.
LITERAL_EXPONENTS = (0.6, 0.7, 0.3)


@dataclass
class ExperimentConfig:
    """Experiment configuration (one run = one config + one seed)."""

    # Scenario
    scenario: str = "stationary"
    episode_slots: int = 2000          # E; regime resampled on average every E slots
    packet_regime: str = "medium"
    num_users: int = 4                 # K
    num_antennas: int = 8              # M
    deadline_slots: int = 10           # D_k, same for every user
    max_dropout_rate: float = 0.1      # c_k

    # Physical layer
    slot_seconds: float = 1e-3         # tau_0
    bandwidth_hz: float = 10e6         # W
    noise_density_dbm_hz: float = -100.0
    num_paths: int = 4                 # N_p
    gain_min_db: float = -10.0
    gain_max_db: float = 10.0
    angular_spread_deg: float = 5.0    # sigma_AS
    path_loss_db: float = 60.0

    # Action space
    p_max: float = 4.0
    eps_min: float = 1e-3
    eps_max: float = 1.0

    # Featurization
    bits_scale: float = 1e-4

    # Agent
    variant: str = "cacrl"
    latent_dim: int = 5                # n_z
    hidden_sizes: list[int] = field(default_factory=lambda: [64, 64])
    encoder_hidden_sizes: list[int] = field(default_factory=lambda: [64, 64])
    init_scale: float = 1.0
    batch_size: int = 200              # B
    critic_batches: int = 10           # T_cri
    context_size: int = 50             # N
    potential_samples: int = 10        # N_a
    pretrain_episodes: int = 300       # I
    freeze_ci_after_pretrain: bool = False

    # CSSCA
    zeta: float = 1.0
    theta_bound: float = 10.0
    mu0: float = 0.5
    eta0: float = 1.0
    upsilon0: float = 1e-3
    rho1: float = 0.7
    rho2: float = 0.6
    rho3: float = 0.55
    dual_max_iter: int = 5000
    dual_tol: float = 1e-6
    literal_rules: bool = False

    # Harness
    seed: int = 0
    iterations: int = 300
    output_dir: str = "runs"
    metrics_window: int = 10           # W_m
    eval_every: int = 50
    eval_slots: int = 10000
    checkpoint_every: int = 50

    @property
    def stationary(self) -> bool:
        return self.scenario == "stationary"

    @property
    def regime_mean_slots(self) -> float:
        """Mean regime sojourn used by the traffic process (inf when stationary)."""
        return math.inf if self.stationary else float(self.episode_slots)

    @property
    def deadlines(self) -> list[int]:
        return [self.deadline_slots] * self.num_users

    @property
    def pretrain_iterations(self) -> int:
        """Pretraining length I episodes converted to policy iterations."""
        return math.ceil(self.pretrain_episodes * self.episode_slots / self.batch_size)

    @property
    def exponents(self) -> tuple[float, float, float]:
        if self.literal_rules:
            return LITERAL_EXPONENTS
        return (self.rho1, self.rho2, self.rho3)

    def validate(self) -> "ExperimentConfig":
        """Check cross-field invariants, raising ConfigurationError on the first violation."""
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.packet_regime not in PACKET_REGIMES:
            raise ConfigurationError(
                f"unknown packet regime {self.packet_regime!r}; expected one of {PACKET_REGIMES}"
            )
        positive_ints = {
            "num_users": self.num_users,
            "num_antennas": self.num_antennas,
            "deadline_slots": self.deadline_slots,
            "num_paths": self.num_paths,
            "episode_slots": self.episode_slots,
            "batch_size": self.batch_size,
            "critic_batches": self.critic_batches,
            "context_size": self.context_size,
            "potential_samples": self.potential_samples,
            "latent_dim": self.latent_dim,
            "iterations": self.iterations,
            "metrics_window": self.metrics_window,
            "dual_max_iter": self.dual_max_iter,
        }
        for name, value in positive_ints.items():
            if int(value) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {value}")
        if self.gain_min_db > self.gain_max_db:
            raise ConfigurationError(
                f"empty gain range [{self.gain_min_db}, {self.gain_max_db}] dB"
            )
        if self.batch_size < self.context_size:
            raise ConfigurationError(
                f"batch_size ({self.batch_size}) must be >= context_size ({self.context_size})"
            )
        if self.critic_batches >= self.batch_size:
            raise ConfigurationError(
                f"critic_batches ({self.critic_batches}) must be < batch_size ({self.batch_size})"
            )
        if not 0.0 < self.max_dropout_rate < 1.0:
            raise ConfigurationError(f"max_dropout_rate must lie in (0, 1), got {self.max_dropout_rate}")
        if self.p_max <= 0:
            raise ConfigurationError(f"p_max must be positive, got {self.p_max}")
        if not 0.0 < self.eps_min < self.eps_max:
            raise ConfigurationError(
                f"regularization range must satisfy 0 < eps_min < eps_max, got "
                f"[{self.eps_min}, {self.eps_max}]"
            )
        if self.zeta <= 0 or self.theta_bound <= 0:
            raise ConfigurationError("zeta and theta_bound must be positive")
        if self.slot_seconds <= 0 or self.bandwidth_hz <= 0:
            raise ConfigurationError("slot_seconds and bandwidth_hz must be positive")
        if self.potential_samples < 1:
            raise ConfigurationError("potential_samples must be >= 1")
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        """Build a config from a flat mapping, rejecting unknown keys."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**data)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Return a copy with the given (non-None) fields replaced."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **changes)


class Config:
    """
    Configuration manager with persistent storage.

    Loads a flat JSON object and overlays it on the embedded defaults.
    """

    def __init__(self, config_path: Optional[Path] = None):
        """
        Initialize configuration manager.

        Args:
            config_path: Path to a flat JSON config file (defaults only if None)
        """
        self._path = Path(config_path) if config_path is not None else None
        self._config = ExperimentConfig()
        self._load()

    @classmethod
    def from_experiment(cls, experiment: ExperimentConfig) -> "Config":
        """Wrap an in-memory experiment configuration."""
        manager = cls()
        manager._config = experiment
        return manager

    @property
    def experiment(self) -> ExperimentConfig:
        """Get the experiment configuration."""
        return self._config

    def _load(self) -> None:
        """Load configuration from file."""
        if self._path is None:
            return
        if not self._path.exists():
            raise ConfigurationError(f"config file not found: {self._path}")
        try:
            with open(self._path, "r") as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {self._path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"config file {self._path} must hold a flat JSON object")
        merged = self._config.to_dict()
        merged.update(data)
        self._config = ExperimentConfig.from_dict(merged)

    def save(self, path: Optional[Path] = None) -> Path:
        """Save the full configuration to file."""
        target = Path(path) if path is not None else self._path
        if target is None:
            raise ConfigurationError("no path given to save the configuration to")
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w") as f:
            json.dump(self._config.to_dict(), f, indent=2, sort_keys=True)
        return target

    def get(self, key: str, default=None):
        """Get a configuration value."""
        return getattr(self._config, key, default)

    def set(self, key: str, value) -> None:
        """Set a configuration value."""
        if not hasattr(self._config, key):
            raise ConfigurationError(f"unknown configuration key {key!r}")
        setattr(self._config, key, value)

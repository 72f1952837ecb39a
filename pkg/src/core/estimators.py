"""
Sample-Average Estimators for the CSSCA optimizer.

Step-size schedules, the per-iteration observation batch, the SAA value
and policy-gradient estimates and their recursive averages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from ..utils.errors import ConfigurationError
from .environment import Action
from .networks import DualHeadNet
from .policy import GaussianPolicy, action_features

if TYPE_CHECKING:
    from ..utils.config import ExperimentConfig


@dataclass(frozen=True)
class StepSchedule:
    """mu_i = mu0 i^-rho1, eta_i = eta0 i^-rho2, upsilon_i = upsilon0 i^-rho3."""

    mu0: float = 0.5
    eta0: float = 1.0
    upsilon0: float = 1e-3
    rho1: float = 0.7
    rho2: float = 0.6
    rho3: float = 0.55
    enforce_ordering: bool = True

    def validate(self) -> "StepSchedule":
        for name in ("mu0", "eta0"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1], got {value}")
        if self.upsilon0 <= 0:
            raise ConfigurationError(f"upsilon0 must be positive, got {self.upsilon0}")
        if self.enforce_ordering:
            for name in ("rho1", "rho2", "rho3"):
                value = getattr(self, name)
                if not 0.5 < value < 1.0:
                    raise ConfigurationError(f"{name} must lie in (0.5, 1), got {value}")
            if not self.rho2 < self.rho1:
                raise ConfigurationError(
                    f"mu_i / eta_i must vanish: need rho2 < rho1, got rho1={self.rho1}, rho2={self.rho2}"
                )
        return self

    @classmethod
    def from_experiment(cls, config: "ExperimentConfig") -> "StepSchedule":
        rho1, rho2, rho3 = config.exponents
        return cls(
            mu0=config.mu0,
            eta0=config.eta0,
            upsilon0=config.upsilon0,
            rho1=rho1,
            rho2=rho2,
            rho3=rho3,
            enforce_ordering=not config.literal_rules,
        ).validate()


def step_sizes(i: int, sched: StepSchedule) -> tuple[float, float, float]:
    """(mu_i, eta_i, upsilon_i) at iteration i >= 1."""
    if i < 1:
        raise ConfigurationError(f"iteration index must be >= 1, got {i}")
    return (
        sched.mu0 * i ** (-sched.rho1),
        sched.eta0 * i ** (-sched.rho2),
        sched.upsilon0 * i ** (-sched.rho3),
    )


@dataclass
class ObservationTuple:
    """
    One slot of collected experience.

    States are augmented (observation followed by z when context is used).
    ``xi`` and ``span`` let the encoder recompute z_t pathwise: span indexes
    the batch's context rows that formed the window at time t.
    """

    state: np.ndarray
    raw_action: np.ndarray
    action: Action
    log_prob: float
    costs: np.ndarray            # [C'_0, ..., C'_K]
    reshaped: np.ndarray         # [C'_0, Cdot'_1, ..., Cdot'_K]
    next_state: np.ndarray
    dropouts: np.ndarray
    resolved: np.ndarray
    regime_id: int = 0
    xi: Optional[np.ndarray] = None
    span: tuple[int, int] = (0, 0)

    @property
    def shaping(self) -> np.ndarray:
        return self.reshaped - self.costs


@dataclass
class IterationBatch:
    """B tuples collected under one policy, with the context rows their spans refer to."""

    tuples: list[ObservationTuple]
    context_rows: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    theta_checksum: str = ""

    def __len__(self) -> int:
        return len(self.tuples)

    def minibatches(self, count: int) -> list["IterationBatch"]:
        """Split into ``count`` contiguous, disjoint, covering mini-batches."""
        if not 1 <= count <= len(self.tuples):
            raise ValueError(f"cannot split {len(self.tuples)} tuples into {count} mini-batches")
        bounds = np.linspace(0, len(self.tuples), count + 1).astype(int)
        return [
            IterationBatch(self.tuples[lo:hi], self.context_rows, self.theta_checksum)
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]

    def states(self) -> np.ndarray:
        return np.stack([t.state for t in self.tuples])

    def next_states(self) -> np.ndarray:
        return np.stack([t.next_state for t in self.tuples])

    def raw_actions(self) -> np.ndarray:
        return np.stack([t.raw_action for t in self.tuples])

    def reshaped_costs(self) -> np.ndarray:
        """(B, K+1)."""
        return np.stack([t.reshaped for t in self.tuples])

    def costs(self) -> np.ndarray:
        return np.stack([t.costs for t in self.tuples])

    def powers(self) -> np.ndarray:
        return np.array([t.action.total_power for t in self.tuples])


def estimate_f_tilde(batch: IterationBatch) -> np.ndarray:
    """f_tilde_k = batch mean of the (reshaped) cost k, k = 0..K."""
    if len(batch) == 0:
        raise ValueError("cannot estimate from an empty batch")
    return batch.reshaped_costs().mean(axis=0)


def update_scalar_average(prev, new, eta: float):
    """(1 - eta) prev + eta new; used for both value and gradient averages."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"averaging weight must lie in [0, 1], got {eta}")
    return (1.0 - eta) * np.asarray(prev, dtype=float) + eta * np.asarray(new, dtype=float)


def estimate_g_tilde(
    batch: IterationBatch,
    policy: GaussianPolicy,
    critics: Sequence[DualHeadNet],
) -> np.ndarray:
    """
    Likelihood-ratio gradient estimates g_tilde_k, k = 0..K.

    g_tilde_k = (1/B) sum_t Q_k(s_t, a_t) grad_theta log pi(g_t | s_t),
    evaluated at the recorded raw samples.

    Returns:
        Array of shape (K+1, len(theta))
    """
    if len(batch) == 0:
        raise ValueError("cannot estimate from an empty batch")
    states = batch.states()
    raws = batch.raw_actions()
    feats = action_features(raws)
    out = np.empty((len(critics), policy.theta.size))
    for k, critic in enumerate(critics):
        q = critic.q_value(states, feats)
        out[k] = policy.log_prob_grad(states, raws, weights=q) / len(batch)
    return out

"""
Potential-Based Cost Shaping for the CACRL scheduler.

Constraint costs are densified with F_k = V_k(s') - V_k(s); the shaping
telescopes over any trajectory so long-run averages are unchanged. The
potential heads regress toward the policy-averaged Q value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .networks import DualHeadNet
from .policy import GaussianPolicy, action_features


@dataclass
class ReshapedCost:
    """
    Original costs C'_k, shaping terms F_k and reshaped costs, index 0 = power.

    F_0 is always 0: the objective is never reshaped.
    """

    original: np.ndarray
    shaping: np.ndarray
    reshaped: np.ndarray


def reshape_costs(
    costs: np.ndarray,
    states: np.ndarray,
    next_states: np.ndarray,
    potentials: Optional[Sequence[DualHeadNet]] = None,
) -> ReshapedCost:
    """
    Add F_k = V_k(s') - V_k(s) to every constraint cost.

    Args:
        costs: [C'_0, ..., C'_K] for one slot, or a (T, K+1) trajectory
        states: Augmented state(s) s_t
        next_states: Augmented successor state(s) s_{t+1}
        potentials: One dual-head net per constraint k = 1..K (no shaping when None)

    Returns:
        ReshapedCost with arrays shaped like ``costs``
    """
    costs = np.asarray(costs, dtype=float)
    single = costs.ndim == 1
    original = np.atleast_2d(costs)
    shaping = np.zeros_like(original)

    if potentials:
        if len(potentials) != original.shape[1] - 1:
            raise ValueError(f"{len(potentials)} potentials for {original.shape[1] - 1} constraints")
        s = np.atleast_2d(states)
        s_next = np.atleast_2d(next_states)
        for k, net in enumerate(potentials, start=1):
            shaping[:, k] = net.v_value(s_next) - net.v_value(s)

    reshaped = original + shaping
    if single:
        return ReshapedCost(original[0], shaping[0], reshaped[0])
    return ReshapedCost(original, shaping, reshaped)


def potential_targets(
    net: DualHeadNet,
    states: np.ndarray,
    policy: GaussianPolicy,
    num_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """V_hat(s) = mean over N_a policy actions of Q(s, a), per state."""
    if num_samples < 1:
        raise ValueError(f"num_samples must be >= 1, got {num_samples}")
    states = np.atleast_2d(states)
    repeated = np.repeat(states, num_samples, axis=0)
    raws = policy.sample_raw(repeated, rng)
    q = net.q_value(repeated, action_features(raws))
    return q.reshape(states.shape[0], num_samples).mean(axis=1)


def potential_update(
    net: DualHeadNet,
    states: np.ndarray,
    policy: GaussianPolicy,
    num_samples: int,
    upsilon: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """
    One SGD step of the potential head toward the SAA value target.

    phi' = phi - upsilon * sum_t grad_phi (V_phi(s_t) - V_hat_t)^2, the
    target held constant.

    Returns:
        (phi', squared regression error before the step)
    """
    states = np.atleast_2d(states)
    targets = potential_targets(net, states, policy, num_samples, rng)
    error = net.v_value(states) - targets
    grad = net.v_backward(states, 2.0 * error)
    return net.phi - upsilon * grad, float(np.sum(error**2))

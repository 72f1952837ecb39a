"""
Average-Cost Critics for the CACRL scheduler.

Semi-gradient TD(0) on the differential Q function of every cost, and
the encoder step that pushes the same Bellman residuals through the
reparameterized context into psi.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..utils.errors import MissingNoiseRecordError, ShapeError
from .context import ContextEncoder
from .networks import DualHeadNet


@dataclass
class CriticBatch:
    """Arrays for one cost index k: transitions with the bootstrap action a'_{t+1}."""

    states: np.ndarray          # (B, d) augmented
    actions: np.ndarray         # (B, K+1) action features
    costs: np.ndarray           # (B,) reshaped cost k
    next_states: np.ndarray
    next_actions: np.ndarray


def bellman_residuals(net: DualHeadNet, batch: CriticBatch, f_hat: float) -> np.ndarray:
    """delta_t = Q(s_t, a_t) - C_t + f_hat - Q(s_{t+1}, a'_{t+1})."""
    q = net.q_value(batch.states, batch.actions)
    q_next = net.q_value(batch.next_states, batch.next_actions)
    return q - batch.costs + f_hat - q_next


def td_critic_update(
    net: DualHeadNet,
    batch: CriticBatch,
    f_hat: float,
    upsilon: float,
) -> tuple[np.ndarray, np.ndarray]:
    """
    One semi-gradient TD step on omega.

    omega' = omega - upsilon * sum_t delta_t grad_omega Q(s_t, a_t); the
    bootstrap term is treated as a constant.

    Returns:
        (omega', residuals)
    """
    delta = bellman_residuals(net, batch, f_hat)
    grad, _ = net.q_backward(batch.states, batch.actions, delta)
    return net.omega - upsilon * grad, delta


@dataclass
class EncoderBatch:
    """
    What the encoder step needs to rebuild z_t(psi) and its regression targets.

    ``targets[k, t]`` is the frozen bootstrap target C_{k,t} - f_hat_k +
    Q_k(s_{t+1}, a'_{t+1}) of the k-th critic passed to ``encoder_update``.
    """

    rows: np.ndarray
    spans: list[tuple[int, int]]
    xis: list[Optional[np.ndarray]]
    observations: np.ndarray    # (B, d_obs) states without z
    actions: np.ndarray
    targets: np.ndarray         # (len(critics), B)


@dataclass
class EncoderStep:
    psi: np.ndarray
    loss: float
    kl: float


def encoder_loss_and_grad(
    encoder: ContextEncoder,
    critics: Sequence[DualHeadNet],
    batch: EncoderBatch,
) -> tuple[float, float, np.ndarray]:
    """
    L(psi) = sum_k sum_t 1/2 (Q_k([s_t, z_t(psi)], a_t) - y_{k,t})^2 + sum_t KL_t.

    z_t is recomputed from the stored context span and noise, so the
    gradient is pathwise at fixed xi.

    Returns:
        (loss, KL part, gradient w.r.t. psi)
    """
    missing = [t for t, xi in enumerate(batch.xis) if xi is None]
    if missing:
        raise MissingNoiseRecordError(
            f"no reparameterization noise stored for tuples {missing[:5]}"
            f"{'...' if len(missing) > 5 else ''}"
        )
    if batch.targets.shape != (len(critics), len(batch.spans)):
        raise ShapeError(
            f"targets of shape {batch.targets.shape}, expected ({len(critics)}, {len(batch.spans)})"
        )

    encoded = encoder.encode_spans(batch.rows, batch.spans, np.stack(batch.xis))
    states = np.hstack([batch.observations, encoded.z])
    obs_dim = batch.observations.shape[1]

    loss = 0.0
    grad_z = np.zeros_like(encoded.z)
    for net, target in zip(critics, batch.targets):
        delta = net.q_value(states, batch.actions) - target
        loss += 0.5 * float(delta @ delta)
        _, g_states = net.q_backward(states, batch.actions, delta)
        grad_z += g_states[:, obs_dim:]

    kl = encoder.kl(encoded)
    return loss + kl, kl, encoder.backward(encoded, grad_z, kl_weight=1.0)


def encoder_update(
    encoder: ContextEncoder,
    critics: Sequence[DualHeadNet],
    batch: EncoderBatch,
    upsilon: float,
) -> EncoderStep:
    """psi' = psi - upsilon (sum_k G^L1_k + G^L2)."""
    loss, kl, grad = encoder_loss_and_grad(encoder, critics, batch)
    return EncoderStep(psi=encoder.psi - upsilon * grad, loss=loss, kl=kl)

"""
Gaussian Policy for the CACRL scheduler.

A diagonal Gaussian over a raw action vector g in R^{K+1}; the raw sample
is squashed through an affine-sigmoid map into powers in [0, p_max]^K and
an RZF regularization factor in [eps_min, eps_max]. Densities and scores
are defined in the raw space.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..utils.errors import ShapeError
from .environment import Action
from .networks import (
    ParamVector,
    init_params,
    net_backward,
    net_forward,
    positive,
    positive_grad,
    sigmoid,
)

_LOG_2PI = float(np.log(2.0 * np.pi))

# Raw std-head bias giving an initial sigma of about 0.5
_INIT_STD_BIAS = float(np.log(np.expm1(0.5)))


@dataclass(frozen=True)
class ActionBounds:
    """Squash ranges of the scheduling action."""

    num_users: int
    p_max: float = 4.0
    eps_min: float = 1e-3
    eps_max: float = 1.0

    @property
    def dim(self) -> int:
        return self.num_users + 1


@dataclass
class PolicySample:
    """One draw from the policy: squashed action, raw Gaussian sample and its log-density."""

    action: Action
    raw: np.ndarray
    log_prob: float

    @property
    def features(self) -> np.ndarray:
        return action_features(self.raw)


def squash(raw: np.ndarray, bounds: ActionBounds) -> Action:
    """Map a raw sample to powers in [0, p_max] and eps in [eps_min, eps_max]."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (bounds.dim,):
        raise ShapeError(f"raw action of shape {raw.shape}, expected ({bounds.dim},)")
    unit = sigmoid(raw)
    powers = bounds.p_max * unit[:-1]
    eps = bounds.eps_min + (bounds.eps_max - bounds.eps_min) * unit[-1]
    return Action(powers=powers, eps=float(eps))


def action_features(raw: np.ndarray) -> np.ndarray:
    """Action representation fed to critics and the context encoder, in [0, 1]."""
    return sigmoid(np.asarray(raw, dtype=float))


class GaussianPolicy:
    """
    pi_theta(g | s) = N(mu_theta(s), diag(sigma_theta(s)^2)).

    theta is the concatenation of the mean-net and std-net parameters.
    """

    def __init__(
        self,
        input_dim: int,
        bounds: ActionBounds,
        hidden_sizes: Sequence[int],
        rng: np.random.Generator,
        init_scale: float = 1.0,
    ):
        """
        Initialize the policy networks.

        Args:
            input_dim: Augmented state dimension
            bounds: Action squash ranges
            hidden_sizes: Hidden widths shared by both heads
            rng: Initialization stream
            init_scale: Weight variance multiplier
        """
        self.input_dim = input_dim
        self.bounds = bounds
        sizes = [input_dim, *hidden_sizes, bounds.dim]
        self.mean_net = init_params(sizes, rng, init_scale)
        std_net = init_params(sizes, rng, init_scale)
        std_net.layers()[-1][1][:] = _INIT_STD_BIAS
        self.std_net = std_net

    @property
    def action_dim(self) -> int:
        return self.bounds.dim

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.mean_net.values, self.std_net.values])

    def set_theta(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float)
        n = len(self.mean_net)
        if theta.shape != (n + len(self.std_net),):
            raise ShapeError(f"theta of length {theta.size}, expected {n + len(self.std_net)}")
        self.mean_net = self.mean_net.with_values(theta[:n])
        self.std_net = self.std_net.with_values(theta[n:])

    def named_params(self) -> dict[str, ParamVector]:
        return {"policy.mean": self.mean_net, "policy.std": self.std_net}

    def checksum(self) -> str:
        """sha256 of theta, logged to tie each batch to the parameters that collected it."""
        return hashlib.sha256(self.theta.astype("<f8").tobytes()).hexdigest()

    def distribution(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(mu, sigma) for one state or a row batch."""
        mu = net_forward(self.mean_net, states)
        sigma = positive(net_forward(self.std_net, states))
        return mu, sigma

    def sample(self, state: np.ndarray, rng: np.random.Generator) -> PolicySample:
        mu, sigma = self.distribution(state)
        raw = mu + sigma * rng.standard_normal(mu.shape)
        return PolicySample(
            action=squash(raw, self.bounds),
            raw=raw,
            log_prob=float(gaussian_log_density(raw, mu, sigma)),
        )

    def sample_raw(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Raw samples for a row batch of states."""
        mu, sigma = self.distribution(states)
        return mu + sigma * rng.standard_normal(mu.shape)

    def mean_action(self, state: np.ndarray) -> PolicySample:
        """Deterministic draw at raw = mu(s), used for frozen-policy evaluation."""
        mu, sigma = self.distribution(state)
        return PolicySample(
            action=squash(mu, self.bounds),
            raw=mu,
            log_prob=float(gaussian_log_density(mu, mu, sigma)),
        )

    def log_prob(self, states: np.ndarray, raws: np.ndarray) -> np.ndarray:
        mu, sigma = self.distribution(states)
        return gaussian_log_density(raws, mu, sigma)

    def log_prob_grad(
        self,
        states: np.ndarray,
        raws: np.ndarray,
        weights: np.ndarray | None = None,
    ) -> np.ndarray:
        """
        Gradient of sum_t w_t log pi_theta(g_t | s_t) with respect to theta.

        Args:
            states: One state or a row batch
            raws: Recorded raw samples, matching ``states``
            weights: Per-row weights (all ones when None)

        Returns:
            Flat gradient with the layout of ``theta``
        """
        states = np.atleast_2d(np.asarray(states, dtype=float))
        raws = np.atleast_2d(np.asarray(raws, dtype=float))
        if raws.shape != (states.shape[0], self.action_dim):
            raise ShapeError(f"raw actions of shape {raws.shape} do not match {states.shape[0]} states")
        w = np.ones(states.shape[0]) if weights is None else np.asarray(weights, dtype=float)

        mu, mean_cache = net_forward(self.mean_net, states, return_cache=True)
        pre, std_cache = net_forward(self.std_net, states, return_cache=True)
        sigma = positive(pre)

        diff = raws - mu
        d_mu = diff / sigma**2
        d_sigma = -1.0 / sigma + diff**2 / sigma**3

        g_mean, _ = net_backward(self.mean_net, states, w[:, None] * d_mu, cache=mean_cache)
        g_std, _ = net_backward(
            self.std_net, states, w[:, None] * d_sigma * positive_grad(pre), cache=std_cache
        )
        return np.concatenate([g_mean, g_std])


def gaussian_log_density(raw: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Diagonal Gaussian log-density, summed over the last axis."""
    z = (raw - mu) / sigma
    return np.sum(-np.log(sigma) - 0.5 * z * z, axis=-1) - 0.5 * mu.shape[-1] * _LOG_2PI


def policy_sample(policy: GaussianPolicy, state: np.ndarray, rng: np.random.Generator) -> PolicySample:
    """Draw (action, raw sample, log-density) at one augmented state."""
    return policy.sample(state, rng)


def policy_logprob_grad(policy: GaussianPolicy, state: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Score function grad_theta log pi_theta(raw | state) of a recorded sample."""
    return policy.log_prob_grad(state, raw)

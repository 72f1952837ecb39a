"""
Context Inference Module for the CACRL scheduler.

Every recent transition (s, a, s') is mapped by a factor network to a
diagonal Gaussian over the latent context z; the factors are fused as a
product of Gaussians and z is drawn by reparameterization.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..utils.errors import NumericalError, ShapeError
from .networks import (
    ParamVector,
    init_params,
    net_backward,
    net_forward,
    positive,
    positive_grad,
)


@dataclass
class GaussianFactor:
    """Diagonal Gaussian N(mean, diag(var))."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.var = np.asarray(self.var, dtype=float)
        if self.mean.shape != self.var.shape:
            raise ShapeError(f"mean {self.mean.shape} and variance {self.var.shape} differ")
        if np.any(~(self.var > 0)):
            raise NumericalError(f"factor variances must be positive, got {self.var}")

    @classmethod
    def prior(cls, dim: int) -> "GaussianFactor":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.mean.size


def gaussian_product_aggregate(
    factors: Sequence[GaussianFactor],
    dim: Optional[int] = None,
) -> GaussianFactor:
    """
    Precision-weighted fusion of independent diagonal Gaussians.

    var = (sum_t 1/v_t)^-1 and mean = var * sum_t u_t / v_t; an empty list
    yields the prior N(0, I) of dimension ``dim``.
    """
    if not factors:
        if dim is None:
            raise ShapeError("dimension required to aggregate an empty factor list")
        return GaussianFactor.prior(dim)
    means = np.stack([f.mean for f in factors])
    variances = np.stack([f.var for f in factors])
    mean, var = _fuse(means, variances)
    return GaussianFactor(mean, var)


def _fuse(means: np.ndarray, variances: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if np.any(~(variances > 0)):
        raise NumericalError("factor variances must be positive")
    precision = np.sum(1.0 / variances, axis=0)
    var = 1.0 / precision
    return var * np.sum(means / variances, axis=0), var


def reparam_sample(agg: GaussianFactor, xi: np.ndarray) -> np.ndarray:
    """z = mean + xi * sqrt(var)."""
    return agg.mean + np.asarray(xi, dtype=float) * np.sqrt(agg.var)


def reparam_backward(agg: GaussianFactor, xi: np.ndarray, grad_z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pull a gradient on z back to (mean, var): dz/dmean = 1, dz/dvar = xi / (2 sqrt(var))."""
    grad_z = np.asarray(grad_z, dtype=float)
    return grad_z, grad_z * np.asarray(xi, dtype=float) / (2.0 * np.sqrt(agg.var))


def kl_to_standard_normal(agg: GaussianFactor) -> float:
    """KL(N(mean, var) || N(0, I))."""
    return float(0.5 * np.sum(agg.var + agg.mean**2 - 1.0 - np.log(agg.var)))


def kl_gradient(agg: GaussianFactor, strict: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """
    Gradient of the KL to N(0, I) with respect to (mean, var).

    ``strict`` drops the constant +1/2 from the variance component.
    """
    g_var = -0.5 / agg.var
    if not strict:
        g_var = g_var + 0.5
    return agg.mean.copy(), g_var


class ContextWindow:
    """Ring buffer of the most recent N transition feature rows (s, a, s')."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"context capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._rows: deque[np.ndarray] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._rows)

    def append(self, row: np.ndarray) -> None:
        self._rows.append(np.asarray(row, dtype=float))

    def rows(self) -> list[np.ndarray]:
        """Oldest first."""
        return list(self._rows)

    def as_array(self, width: int) -> np.ndarray:
        if not self._rows:
            return np.empty((0, width))
        return np.stack(self._rows)

    def clear(self) -> None:
        self._rows.clear()


def transition_row(obs: np.ndarray, action_feats: np.ndarray, next_obs: np.ndarray) -> np.ndarray:
    """Flatten one transition into the encoder input layout [s, a, s']."""
    return np.concatenate([obs, action_feats, next_obs])


@dataclass
class ContextSample:
    """Inferred context: z, the noise that produced it, and the aggregate posterior."""

    z: np.ndarray
    xi: Optional[np.ndarray]
    posterior: GaussianFactor


def draw_context(
    agg: GaussianFactor,
    rng: Optional[np.random.Generator] = None,
    mode: str = "sample",
) -> ContextSample:
    """z from an aggregate posterior: reparameterized draw, or the mean in "mean" mode."""
    if mode == "mean":
        return ContextSample(z=agg.mean.copy(), xi=None, posterior=agg)
    if mode != "sample":
        raise ValueError(f"unknown inference mode {mode!r}")
    if rng is None:
        raise ValueError("sample mode needs a random stream")
    xi = rng.standard_normal(agg.dim)
    return ContextSample(z=reparam_sample(agg, xi), xi=xi, posterior=agg)


@dataclass
class EncodedSpans:
    """Forward record of a span-batched encoder pass, consumed by ``ContextEncoder.backward``."""

    rows: np.ndarray
    spans: list[tuple[int, int]]
    xis: np.ndarray
    factor_means: np.ndarray
    factor_vars: np.ndarray
    factor_pre: np.ndarray
    posteriors: list[GaussianFactor]
    z: np.ndarray


class ContextEncoder:
    """
    Factor network psi: transition row -> (u, v) with v softplus-positive.

    Spans of a shared row array index the context window of each tuple, so
    one network pass covers every window of a batch.
    """

    def __init__(
        self,
        input_dim: int,
        latent_dim: int,
        hidden_sizes: Sequence[int],
        rng: np.random.Generator,
        init_scale: float = 1.0,
        strict_kl: bool = False,
    ):
        self.input_dim = input_dim
        self.latent_dim = latent_dim
        self.strict_kl = strict_kl
        self.params = init_params([input_dim, *hidden_sizes, 2 * latent_dim], rng, init_scale)
        self.reads = 0

    @property
    def psi(self) -> np.ndarray:
        return self.params.values

    def set_psi(self, values: np.ndarray) -> None:
        self.params = self.params.with_values(values)

    def named_params(self) -> dict[str, ParamVector]:
        return {"encoder": self.params}

    def factors(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-row (u, v, raw variance output)."""
        self.reads += 1
        out = net_forward(self.params, np.atleast_2d(rows))
        pre = out[:, self.latent_dim:]
        return out[:, :self.latent_dim], positive(pre), pre

    def posterior(self, rows: np.ndarray) -> GaussianFactor:
        """Aggregate posterior of one window (prior when empty)."""
        rows = np.asarray(rows, dtype=float).reshape(-1, self.input_dim)
        if rows.shape[0] == 0:
            return GaussianFactor.prior(self.latent_dim)
        u, v, _ = self.factors(rows)
        return GaussianFactor(*_fuse(u, v))

    def infer(
        self,
        rows: np.ndarray,
        rng: Optional[np.random.Generator] = None,
        mode: str = "sample",
    ) -> ContextSample:
        """
        Infer z from one context window.

        Args:
            rows: Transition rows of the window, shape (n, input_dim), n may be 0
            rng: Noise stream (required in sample mode)
            mode: "sample" draws z by reparameterization; "mean" returns the posterior mean

        Returns:
            ContextSample
        """
        return draw_context(self.posterior(rows), rng, mode)

    def encode_spans(
        self,
        rows: np.ndarray,
        spans: Sequence[tuple[int, int]],
        xis: np.ndarray,
    ) -> EncodedSpans:
        """Recompute z for every span with fixed noise, recording what ``backward`` needs."""
        rows = np.asarray(rows, dtype=float).reshape(-1, self.input_dim)
        xis = np.atleast_2d(np.asarray(xis, dtype=float))
        if rows.shape[0]:
            u, v, pre = self.factors(rows)
        else:
            u = v = pre = np.empty((0, self.latent_dim))

        posteriors, z = [], np.empty((len(spans), self.latent_dim))
        for t, (lo, hi) in enumerate(spans):
            if hi > lo:
                agg = GaussianFactor(*_fuse(u[lo:hi], v[lo:hi]))
            else:
                agg = GaussianFactor.prior(self.latent_dim)
            posteriors.append(agg)
            z[t] = reparam_sample(agg, xis[t])
        return EncodedSpans(rows, list(spans), xis, u, v, pre, posteriors, z)

    def kl(self, encoded: EncodedSpans) -> float:
        return float(sum(kl_to_standard_normal(p) for p in encoded.posteriors))

    def backward(self, encoded: EncodedSpans, grad_z: np.ndarray, kl_weight: float = 1.0) -> np.ndarray:
        """
        Gradient w.r.t. psi of sum_t <grad_z_t, z_t> + kl_weight * sum_t KL_t.

        Chains through the reparameterization, the product-of-Gaussians
        fusion of each span and the softplus variance head.
        """
        grad_z = np.atleast_2d(np.asarray(grad_z, dtype=float))
        g_u = np.zeros_like(encoded.factor_means)
        g_v = np.zeros_like(encoded.factor_vars)

        for t, (lo, hi) in enumerate(encoded.spans):
            if hi <= lo:
                continue
            agg = encoded.posteriors[t]
            g_mean, g_var = reparam_backward(agg, encoded.xis[t], grad_z[t])
            if kl_weight:
                k_mean, k_var = kl_gradient(agg, self.strict_kl)
                g_mean = g_mean + kl_weight * k_mean
                g_var = g_var + kl_weight * k_var

            u, v = encoded.factor_means[lo:hi], encoded.factor_vars[lo:hi]
            g_u[lo:hi] += g_mean * agg.var / v
            g_v[lo:hi] += (g_mean * agg.var * (agg.mean - u) + g_var * agg.var**2) / v**2

        if not encoded.rows.shape[0]:
            return np.zeros_like(self.params.values)
        cotangent = np.hstack([g_u, g_v * positive_grad(encoded.factor_pre)])
        grad, _ = net_backward(self.params, encoded.rows, cotangent)
        return grad


def infer_context(
    window: ContextWindow,
    encoder: ContextEncoder,
    rng: Optional[np.random.Generator] = None,
    mode: str = "sample",
) -> ContextSample:
    """Infer z_t from the current context window."""
    return encoder.infer(window.as_array(encoder.input_dim), rng, mode)


class EncodedWindow:
    """
    Context window that keeps each row's factor alongside it.

    Factors are computed once per row under the current psi; call
    ``refresh`` after psi changes.
    """

    def __init__(self, encoder: ContextEncoder, capacity: int):
        self.encoder = encoder
        self.window = ContextWindow(capacity)
        self._means: deque[np.ndarray] = deque(maxlen=capacity)
        self._vars: deque[np.ndarray] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.window)

    def rows(self) -> list[np.ndarray]:
        return self.window.rows()

    def append(self, row: np.ndarray) -> None:
        self.window.append(row)
        u, v, _ = self.encoder.factors(np.asarray(row, dtype=float)[None, :])
        self._means.append(u[0])
        self._vars.append(v[0])

    def refresh(self) -> None:
        self._means.clear()
        self._vars.clear()
        if len(self.window):
            u, v, _ = self.encoder.factors(self.window.as_array(self.encoder.input_dim))
            self._means.extend(u)
            self._vars.extend(v)

    def posterior(self) -> GaussianFactor:
        if not self._means:
            return GaussianFactor.prior(self.encoder.latent_dim)
        return GaussianFactor(*_fuse(np.stack(self._means), np.stack(self._vars)))

    def infer(self, rng: Optional[np.random.Generator] = None, mode: str = "sample") -> ContextSample:
        return draw_context(self.posterior(), rng, mode)

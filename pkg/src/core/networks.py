"""
Function Approximators for the CACRL agent.

Small feedforward networks over flat parameter vectors with exact
reverse-mode gradients, the dual-head Q/V critic, and the checkpoint
format shared by every network.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from ..utils.errors import CheckpointError, ShapeError

CHECKPOINT_FORMAT = "cacrl-params"
CHECKPOINT_VERSION = 1

# Lower bound added to every softplus-positive output
POSITIVE_FLOOR = 1e-4


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return expit(x)


def positive(x):
    """Softplus with floor: maps raw outputs to strictly positive values."""
    return softplus(x) + POSITIVE_FLOOR


def positive_grad(x):
    """Derivative of ``positive``."""
    return expit(x)


_ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    # derivative is expressed through the activation output
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "linear": (lambda z: z, lambda y: np.ones_like(y)),
}


def param_count(sizes: Sequence[int]) -> int:
    """Number of weights and biases of a dense net with the given layer widths."""
    return int(sum(n_in * n_out + n_out for n_in, n_out in zip(sizes[:-1], sizes[1:])))


@dataclass
class ParamVector:
    """Flat parameters of one network plus its layer-width descriptor."""

    values: np.ndarray
    sizes: tuple[int, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2:
            raise ShapeError(f"a network needs at least input and output widths, got {self.sizes}")
        expected = param_count(self.sizes)
        if self.values.shape != (expected,):
            raise ShapeError(
                f"parameter vector of length {self.values.size} does not match sizes "
                f"{self.sizes} (expected {expected})"
            )

    def __len__(self) -> int:
        return self.values.size

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views per layer, W of shape (out, in)."""
        out, offset = [], 0
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            W = self.values[offset:offset + n_in * n_out].reshape(n_out, n_in)
            offset += n_in * n_out
            b = self.values[offset:offset + n_out]
            offset += n_out
            out.append((W, b))
        return out

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.sizes)

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(np.array(values, dtype=np.float64), self.sizes)

    def checksum(self) -> str:
        return hashlib.sha256(self.values.astype("<f8").tobytes()).hexdigest()


def init_params(
    sizes: Sequence[int],
    rng: np.random.Generator,
    scale: float = 1.0,
    output_scale: float = 0.1,
) -> ParamVector:
    """Gaussian weights with variance scale/fan_in, zero biases, shrunk last layer."""
    chunks = []
    n_layers = len(sizes) - 1
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        W = rng.standard_normal((n_out, n_in)) * np.sqrt(scale / n_in)
        if i == n_layers - 1:
            W *= output_scale
        chunks.extend([W.ravel(), np.zeros(n_out)])
    return ParamVector(np.concatenate(chunks), tuple(sizes))


@dataclass
class ForwardCache:
    """Layer activations recorded by a forward pass (row-batched)."""

    activations: list[np.ndarray]
    single: bool


def net_forward(
    params: ParamVector,
    x: np.ndarray,
    activation: str = "tanh",
    activate_last: bool = False,
    return_cache: bool = False,
):
    """
    Evaluate a dense network.

    Hidden layers apply ``activation``; the last layer is affine unless
    ``activate_last``.

    Args:
        params: Network parameters
        x: Input of shape (n_in,) or (batch, n_in)
        activation: Name of the hidden nonlinearity
        activate_last: Apply the nonlinearity to the output layer too
        return_cache: Also return the ForwardCache for ``net_backward``

    Returns:
        Output of shape (n_out,) or (batch, n_out) [, cache]
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = np.atleast_2d(x)
    if a.ndim != 2 or a.shape[1] != params.sizes[0]:
        raise ShapeError(f"input of shape {x.shape} does not match input width {params.sizes[0]}")

    act, _ = _ACTIVATIONS[activation]
    layers = params.layers()
    activations = [a]
    for i, (W, b) in enumerate(layers):
        z = a @ W.T + b
        a = act(z) if (i < len(layers) - 1 or activate_last) else z
        activations.append(a)

    out = a[0] if single else a
    if return_cache:
        return out, ForwardCache(activations, single)
    return out


def net_backward(
    params: ParamVector,
    x: np.ndarray,
    cotangent: np.ndarray,
    activation: str = "tanh",
    activate_last: bool = False,
    cache: Optional[ForwardCache] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Reverse-mode gradients of <cotangent, net(x)>.

    Batched inputs sum their parameter gradients over rows.

    Returns:
        (flat parameter gradient, input gradient shaped like x)
    """
    if cache is None:
        _, cache = net_forward(params, x, activation, activate_last, return_cache=True)
    _, dact = _ACTIVATIONS[activation]

    g = np.atleast_2d(np.asarray(cotangent, dtype=np.float64))
    layers = params.layers()
    n_layers = len(layers)
    if g.shape != cache.activations[-1].shape:
        raise ShapeError(
            f"cotangent of shape {np.shape(cotangent)} does not match output "
            f"{cache.activations[-1].shape}"
        )

    grads: list[np.ndarray] = [None] * (2 * n_layers)
    for i in range(n_layers - 1, -1, -1):
        W, _ = layers[i]
        if i < n_layers - 1 or activate_last:
            g = g * dact(cache.activations[i + 1])
        grads[2 * i] = (g.T @ cache.activations[i]).ravel()
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ W

    input_grad = g[0] if cache.single else g
    return np.concatenate(grads), input_grad


class DualHeadNet:
    """
    Critic with a shared state trunk feeding a Q head and a V head.

    The trunk reads the augmented state; the Q head reads trunk features
    concatenated with the action features; the V head (the potential)
    reads trunk features only. omega = [trunk, Q head]; phi = V head.
    """

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        hidden_sizes: Sequence[int],
        rng: np.random.Generator,
        init_scale: float = 1.0,
    ):
        hidden = list(hidden_sizes)
        width = hidden[-1]
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.trunk = init_params([state_dim, *hidden], rng, init_scale, output_scale=1.0)
        self.q_head = init_params([width + action_dim, width, 1], rng, init_scale)
        self.v_head = init_params([width, 1], rng, init_scale)
        self.potential_reads = 0

    # -- parameter views -------------------------------------------------

    @property
    def omega(self) -> np.ndarray:
        return np.concatenate([self.trunk.values, self.q_head.values])

    def set_omega(self, values: np.ndarray) -> None:
        n = len(self.trunk)
        self.trunk = self.trunk.with_values(values[:n])
        self.q_head = self.q_head.with_values(values[n:])

    @property
    def phi(self) -> np.ndarray:
        return self.v_head.values

    def set_phi(self, values: np.ndarray) -> None:
        self.v_head = self.v_head.with_values(values)

    def named_params(self, prefix: str) -> dict[str, ParamVector]:
        return {
            f"{prefix}.trunk": self.trunk,
            f"{prefix}.q_head": self.q_head,
            f"{prefix}.v_head": self.v_head,
        }

    # -- Q head ----------------------------------------------------------

    def _features(self, states):
        return net_forward(self.trunk, np.atleast_2d(states), activate_last=True, return_cache=True)

    def q_value(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Q(s, a) for row-batched states and action features; shape (batch,)."""
        feats, _ = self._features(states)
        head_in = np.hstack([feats, np.atleast_2d(actions)])
        return net_forward(self.q_head, head_in)[:, 0]

    def q_backward(
        self,
        states: np.ndarray,
        actions: np.ndarray,
        cotangent: np.ndarray,
    ) -> tuple[np.ndarray, np.ndarray]:
        """
        Gradients of sum_t cotangent_t Q(s_t, a_t).

        Returns:
            (gradient w.r.t. omega, gradient w.r.t. the state rows)
        """
        states = np.atleast_2d(states)
        feats, trunk_cache = self._features(states)
        head_in = np.hstack([feats, np.atleast_2d(actions)])
        cot = np.asarray(cotangent, dtype=np.float64).reshape(-1, 1)
        g_head, g_head_in = net_backward(self.q_head, head_in, cot)
        g_feats = g_head_in[:, :feats.shape[1]]
        g_trunk, g_states = net_backward(
            self.trunk, states, g_feats, activate_last=True, cache=trunk_cache
        )
        return np.concatenate([g_trunk, g_head]), g_states

    # -- V head ----------------------------------------------------------

    def v_value(self, states: np.ndarray) -> np.ndarray:
        """Potential V(s) for row-batched states; shape (batch,)."""
        self.potential_reads += 1
        feats, _ = self._features(states)
        return net_forward(self.v_head, feats)[:, 0]

    def v_backward(self, states: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        """Gradient of sum_t cotangent_t V(s_t) w.r.t. phi (trunk held fixed)."""
        self.potential_reads += 1
        feats, _ = self._features(states)
        cot = np.asarray(cotangent, dtype=np.float64).reshape(-1, 1)
        g_phi, _ = net_backward(self.v_head, feats, cot)
        return g_phi


def save_checkpoint(path: Path, networks: dict[str, ParamVector]) -> str:
    """
    Write named parameter vectors to one file.

    Layout: a single JSON header line (format, version, per-network name,
    sizes and length, sha256 of the payload) followed by the concatenated
    little-endian float64 payload. Returns the payload checksum.
    """
    names = sorted(networks)
    payload = b"".join(networks[n].values.astype("<f8").tobytes() for n in names)
    digest = hashlib.sha256(payload).hexdigest()
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "networks": [
            {"name": n, "sizes": list(networks[n].sizes), "length": len(networks[n])}
            for n in names
        ],
        "sha256": digest,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(payload)
    return digest


def load_checkpoint(path: Path) -> dict[str, ParamVector]:
    """Read a checkpoint written by ``save_checkpoint``, verifying its checksum."""
    with open(path, "rb") as f:
        header_line = f.readline()
        payload = f.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint header") from exc
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format {header.get('format')!r}")
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")

    flat = np.frombuffer(payload, dtype="<f8")
    out, offset = {}, 0
    for entry in header["networks"]:
        n = entry["length"]
        if offset + n > flat.size:
            raise CheckpointError(f"{path}: payload shorter than header declares")
        out[entry["name"]] = ParamVector(flat[offset:offset + n].astype(np.float64), entry["sizes"])
        offset += n
    if offset != flat.size:
        raise CheckpointError(f"{path}: {flat.size - offset} trailing values after the last network")
    return out

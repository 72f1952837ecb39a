"""
Downlink Channel Module for the XR scheduler.

Geometry-based block-fading MU-MISO channels, normalized regularized
zero-forcing (RZF) precoding and per-user SINR rates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
import scipy.linalg

from ..utils.errors import ConfigurationError, NumericalError

if TYPE_CHECKING:
    from ..utils.config import ExperimentConfig


def db_to_linear(value_db):
    """Convert a power ratio in dB to linear scale."""
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def noise_power_watts(density_dbm_hz: float, bandwidth_hz: float) -> float:
    """Thermal noise power over the band, from a density in dBm/Hz."""
    return float(10.0 ** ((density_dbm_hz - 30.0) / 10.0) * bandwidth_hz)


@dataclass(frozen=True)
class ChannelConfig:
    """Parameters of the geometry-based channel model."""

    num_users: int
    num_antennas: int
    num_paths: int = 4
    gain_min_db: float = -10.0
    gain_max_db: float = 10.0
    angular_spread_deg: float = 5.0
    path_loss_db: float = 0.0

    def validate(self) -> "ChannelConfig":
        if self.num_antennas < 1:
            raise ConfigurationError(f"num_antennas must be >= 1, got {self.num_antennas}")
        if self.num_users < 1:
            raise ConfigurationError(f"num_users must be >= 1, got {self.num_users}")
        if self.num_paths < 1:
            raise ConfigurationError(f"num_paths must be >= 1, got {self.num_paths}")
        if self.gain_min_db > self.gain_max_db:
            raise ConfigurationError(
                f"empty gain range [{self.gain_min_db}, {self.gain_max_db}] dB"
            )
        if self.angular_spread_deg < 0:
            raise ConfigurationError("angular_spread_deg must be nonnegative")
        return self

    @property
    def amplitude_scale(self) -> float:
        """Amplitude factor that undoes the large-scale attenuation (feature scaling)."""
        return float(10.0 ** (self.path_loss_db / 20.0))

    @classmethod
    def from_experiment(cls, config: "ExperimentConfig") -> "ChannelConfig":
        return cls(
            num_users=config.num_users,
            num_antennas=config.num_antennas,
            num_paths=config.num_paths,
            gain_min_db=config.gain_min_db,
            gain_max_db=config.gain_max_db,
            angular_spread_deg=config.angular_spread_deg,
            path_loss_db=config.path_loss_db,
        ).validate()


@dataclass
class ChannelMatrix:
    """Downlink CSI H_t with the geometry that generated it."""

    h: np.ndarray                   # (K, M) complex
    path_gains: np.ndarray          # (K,) linear, g_k
    path_coefficients: np.ndarray   # (K, N_p) complex, alpha_{k,l}
    aods: np.ndarray                # (K, N_p) radians, psi_{k,l}

    def __post_init__(self):
        if not np.all(np.isfinite(self.h)):
            raise NumericalError("channel matrix has nonfinite entries")

    @property
    def num_users(self) -> int:
        return self.h.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.h.shape[1]

    def features(self, amplitude_scale: float = 1.0) -> np.ndarray:
        """Real feature vector: scaled real parts followed by imaginary parts."""
        scaled = self.h * amplitude_scale
        return np.concatenate([scaled.real.ravel(), scaled.imag.ravel()])


def ula_response(psi, num_antennas: int) -> np.ndarray:
    """
    Half-wavelength uniform linear array response.

    a(psi) = [1, e^{-j pi sin psi}, ..., e^{-j pi (M-1) sin psi}]

    Args:
        psi: Angle(s) of departure in radians, any shape
        num_antennas: Number of array elements M

    Returns:
        Array of shape psi.shape + (M,)
    """
    psi = np.asarray(psi, dtype=float)
    m = np.arange(num_antennas)
    return np.exp(-1j * np.pi * np.sin(psi)[..., None] * m)


def channel_from_paths(
    path_coefficients: np.ndarray,
    aods: np.ndarray,
    num_antennas: int,
) -> np.ndarray:
    """h_k = sum_l alpha_{k,l} a(psi_{k,l}), stacked over users."""
    coeffs = np.atleast_2d(np.asarray(path_coefficients, dtype=complex))
    angles = np.atleast_2d(np.asarray(aods, dtype=float))
    return np.einsum("kl,klm->km", coeffs, ula_response(angles, num_antennas))


def draw_mean_aods(rng: np.random.Generator, num_users: int) -> np.ndarray:
    """Per-user mean angle of departure, uniform in [-pi/2, pi/2]."""
    return rng.uniform(-np.pi / 2, np.pi / 2, size=num_users)


def generate_channel(
    rng: np.random.Generator,
    params: ChannelConfig,
    mean_aods: Optional[np.ndarray] = None,
) -> ChannelMatrix:
    """
    Draw one block-fading channel realization.

    Path gains g_k are uniform in the configured dB range; per-path
    variances are exponential draws normalized to sum to g_k; coefficients
    are circularly-symmetric complex Gaussian with those variances; AoDs
    are Laplacian around the per-user mean with standard deviation sigma_AS.

    Args:
        rng: Seeded random stream
        params: Channel configuration
        mean_aods: Per-user mean AoD (radians); drawn when None

    Returns:
        ChannelMatrix of shape (K, M)
    """
    params.validate()
    K, M, L = params.num_users, params.num_antennas, params.num_paths

    if mean_aods is None:
        mean_aods = draw_mean_aods(rng, K)

    gains = db_to_linear(rng.uniform(params.gain_min_db, params.gain_max_db, size=K))
    gains = gains * db_to_linear(-params.path_loss_db)

    raw = rng.exponential(1.0, size=(K, L))
    variances = raw / raw.sum(axis=1, keepdims=True) * gains[:, None]

    coeffs = np.sqrt(variances / 2.0) * (
        rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))
    )

    # Laplacian with std sigma has scale sigma / sqrt(2)
    scale = np.deg2rad(params.angular_spread_deg) / np.sqrt(2.0)
    aods = np.asarray(mean_aods, dtype=float)[:, None] + rng.laplace(0.0, scale, size=(K, L))

    h = channel_from_paths(coeffs, aods, M)
    return ChannelMatrix(h=h, path_gains=gains, path_coefficients=coeffs, aods=aods)


def rzf_precoder(H, eps: float) -> np.ndarray:
    """
    Normalized regularized zero-forcing precoder.

    V = H^H (H H^H + eps I)^{-1} Lambda^{1/2}, with Lambda^{1/2} scaling every
    column of the unnormalized precoder to unit L2 norm.

    Args:
        H: ChannelMatrix or (K, M) complex array
        eps: Regularization factor (0 allowed when H H^H is invertible)

    Returns:
        (M, K) complex precoding matrix with unit-norm columns
    """
    h = H.h if isinstance(H, ChannelMatrix) else np.atleast_2d(np.asarray(H, dtype=complex))
    if eps < 0:
        raise NumericalError(f"regularization factor must be nonnegative, got {eps}")

    K = h.shape[0]
    gram = h @ h.conj().T + eps * np.eye(K)
    try:
        # gram is Hermitian, so (gram^{-1} H)^H = H^H gram^{-1}
        solved = scipy.linalg.solve(gram, h, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        cond = np.linalg.cond(gram)
        raise NumericalError(
            f"RZF system H H^H + eps I is singular (K={K}, M={h.shape[1]}, eps={eps}, "
            f"cond={cond:.3e}): {exc}"
        ) from exc

    v_bar = solved.conj().T
    norms = np.linalg.norm(v_bar, axis=0)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise NumericalError(f"RZF produced degenerate columns (norms={norms})")
    return v_bar / norms


def compute_rates(
    H,
    V: np.ndarray,
    p: np.ndarray,
    noise_powers,
    bandwidth_hz: float,
) -> np.ndarray:
    """
    Per-user achievable rate in bits/s.

    R_k = W log2(1 + p_k |h_k v_k|^2 / (sum_{m != k} p_m |h_k v_m|^2 + sigma_k^2))

    Args:
        H: ChannelMatrix or (K, M) complex array
        V: (M, K) precoding matrix
        p: Power per user (watts, >= 0)
        noise_powers: Scalar or per-user noise power (watts, > 0)
        bandwidth_hz: Bandwidth W

    Returns:
        Rate vector of shape (K,)
    """
    h = H.h if isinstance(H, ChannelMatrix) else np.atleast_2d(np.asarray(H, dtype=complex))
    p = np.asarray(p, dtype=float)
    noise = np.broadcast_to(np.asarray(noise_powers, dtype=float), p.shape)
    if np.any(p < 0):
        raise ValueError(f"powers must be nonnegative, got {p}")
    if np.any(noise <= 0):
        raise ValueError(f"noise powers must be positive, got {noise}")

    gains = np.abs(h @ V) ** 2          # gains[k, m] = |h_k v_m|^2
    received = gains * p[None, :]
    signal = np.diag(received)
    interference = received.sum(axis=1) - signal
    return bandwidth_hz * np.log2(1.0 + signal / (interference + noise))

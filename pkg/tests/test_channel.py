"""
Tests for the downlink channel module.

Covers array responses, RZF normalization and the SINR rate formula.
"""

import numpy as np
import pytest

from src.core.channel import (
    ChannelConfig,
    ChannelMatrix,
    compute_rates,
    generate_channel,
    noise_power_watts,
    rzf_precoder,
    ula_response,
)
from src.utils.errors import ConfigurationError, NumericalError


def random_channel(rng, K, M):
    return rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M))


class TestHelpers:
    """Tests for unit conversions and the array response."""

    def test_noise_power(self):
        """-100 dBm/Hz over 10 MHz is 1e-6 W."""
        assert noise_power_watts(-100.0, 1e7) == pytest.approx(1e-6)

    def test_broadside_response_is_all_ones(self):
        """A zero departure angle gives an in-phase array."""
        np.testing.assert_allclose(ula_response(0.0, 6), np.ones(6))

    def test_response_shape(self):
        """Angles of any shape gain a trailing antenna axis."""
        assert ula_response(np.zeros((3, 2)), 5).shape == (3, 2, 5)


class TestChannelGeneration:
    """Tests for the geometry-based channel draw."""

    def test_shapes(self, rng):
        """The channel is (K, M) and the features are real of length 2KM."""
        params = ChannelConfig(num_users=3, num_antennas=4)
        channel = generate_channel(rng, params)
        assert channel.h.shape == (3, 4)
        assert channel.features().shape == (24,)
        assert channel.features().dtype == float

    def test_invalid_config(self):
        """Inverted gain ranges are rejected."""
        with pytest.raises(ConfigurationError):
            ChannelConfig(num_users=1, num_antennas=1, gain_min_db=5, gain_max_db=-5).validate()

    def test_nonfinite_channel(self):
        """NaN entries are refused at construction."""
        with pytest.raises(NumericalError):
            ChannelMatrix(
                h=np.array([[np.nan + 0j]]),
                path_gains=np.ones(1),
                path_coefficients=np.ones((1, 1), dtype=complex),
                aods=np.zeros((1, 1)),
            )

    def test_seeded_draws_repeat(self):
        """Two equal seeds give the same realization."""
        params = ChannelConfig(num_users=2, num_antennas=3)
        a = generate_channel(np.random.default_rng(7), params)
        b = generate_channel(np.random.default_rng(7), params)
        np.testing.assert_array_equal(a.h, b.h)

    @pytest.mark.slow
    def test_mean_channel_energy(self):
        """At 0 dB path loss, E ||h_k||^2 = M g_k."""
        rng = np.random.default_rng(11)
        params = ChannelConfig(num_users=2, num_antennas=4, path_loss_db=0.0)
        ratios = []
        for _ in range(10_000):
            channel = generate_channel(rng, params)
            ratios.append(np.linalg.norm(channel.h, axis=1) ** 2 / channel.path_gains)
        np.testing.assert_allclose(np.mean(ratios, axis=0), 4.0, rtol=0.05)


class TestRZF:
    """Tests for the normalized RZF precoder."""

    @pytest.mark.parametrize("eps", [1e-3, 0.1, 1.0])
    def test_unit_norm_columns(self, rng, eps):
        """Every precoding column has unit L2 norm."""
        V = rzf_precoder(random_channel(rng, 3, 5), eps)
        np.testing.assert_allclose(np.linalg.norm(V, axis=0), 1.0, atol=1e-12)

    def test_zero_forcing_limit(self, rng):
        """With eps -> 0 and K <= M the interference terms vanish."""
        h = random_channel(rng, 2, 4)
        V = rzf_precoder(h, 1e-12)
        cross = np.abs(h @ V)
        assert cross[0, 1] < 1e-6
        assert cross[1, 0] < 1e-6

    def test_singular_gram_raises(self):
        """Linearly dependent users with eps = 0 cannot be precoded."""
        h = np.array([[1.0, 0.0], [1.0, 0.0]], dtype=complex)
        with pytest.raises(NumericalError):
            rzf_precoder(h, 0.0)

    def test_negative_eps_raises(self, rng):
        """The regularization factor must be nonnegative."""
        with pytest.raises(NumericalError):
            rzf_precoder(random_channel(rng, 1, 2), -1.0)


class TestRates:
    """Tests for the SINR rate formula."""

    def test_single_user_closed_form(self, rng):
        """K = 1: RZF is matched filtering, R = W log2(1 + p |h|^2 / sigma^2)."""
        h = random_channel(rng, 1, 4)
        V = rzf_precoder(h, 0.5)
        rate = compute_rates(h, V, np.array([2.0]), 1e-2, 1e6)
        expected = 1e6 * np.log2(1.0 + 2.0 * np.linalg.norm(h) ** 2 / 1e-2)
        assert rate[0] == pytest.approx(expected, rel=1e-10)

    def test_zero_power_zero_rate(self, rng):
        """A silent user gets no rate."""
        h = random_channel(rng, 2, 3)
        rates = compute_rates(h, rzf_precoder(h, 0.1), np.array([0.0, 1.0]), 1e-3, 1e6)
        assert rates[0] == 0.0
        assert rates[1] > 0.0

    def test_negative_power_rejected(self, rng):
        """Powers must be nonnegative."""
        h = random_channel(rng, 1, 2)
        with pytest.raises(ValueError):
            compute_rates(h, rzf_precoder(h, 0.1), np.array([-1.0]), 1e-3, 1e6)

    def test_monotone_in_own_power(self, rng):
        """Raising p_k raises R_k and never raises any other user's rate."""
        for _ in range(100):
            K = int(rng.integers(2, 5))
            h = random_channel(rng, K, int(rng.integers(K, 7)))
            V = rzf_precoder(h, rng.uniform(1e-3, 1.0))
            p = rng.uniform(0.0, 2.0, size=K)
            k = int(rng.integers(K))
            louder = p.copy()
            louder[k] += rng.uniform(0.01, 1.0)
            before = compute_rates(h, V, p, 1e-2, 1e6)
            after = compute_rates(h, V, louder, 1e-2, 1e6)
            assert after[k] > before[k]
            others = np.arange(K) != k
            assert np.all(after[others] <= before[others] * (1 + 1e-12))

    def test_orthogonal_users_exact_zero_forcing(self, rng):
        """Orthogonal channels at eps = 0: v_k = h_k^H / ||h_k|| and no interference."""
        basis, _ = np.linalg.qr(random_channel(rng, 4, 4))
        scales = np.array([0.7, 2.3])
        h = scales[:, None] * basis[:, :2].T
        V = rzf_precoder(h, 0.0)
        np.testing.assert_allclose(V, h.conj().T / np.linalg.norm(h, axis=1), atol=1e-12)
        p = np.array([1.5, 0.4])
        rates = compute_rates(h, V, p, 1e-2, 1e6)
        expected = 1e6 * np.log2(1.0 + p * scales**2 / 1e-2)
        np.testing.assert_allclose(rates, expected, rtol=1e-10)

"""
Tests for the CACRL agent.

Small end-to-end checks of collection, one policy iteration and the
variant wiring.
"""

import numpy as np
import pytest

from src.core.agent import DEPLOY, PRETRAIN, RandomStreams, Variant, variant_dispatch
from src.core.context import reparam_sample
from src.core.experiment import build_agent
from src.utils.errors import ConfigurationError


class TestRandomStreams:
    """Tests for seeded stream spawning."""

    def test_same_seed_same_streams(self):
        a, b = RandomStreams.from_seed(5), RandomStreams.from_seed(5)
        assert a.env.random() == b.env.random()
        assert a.policy.random() == b.policy.random()

    def test_streams_are_independent(self):
        s = RandomStreams.from_seed(5)
        assert s.env.random() != s.policy.random()

    def test_fresh_evaluation_streams(self):
        s = RandomStreams.from_seed(5)
        assert s.evaluation_rng().random() != s.evaluation_rng().random()


class TestVariants:
    """Tests for variant wiring."""

    def test_flags(self):
        assert Variant.CACRL.uses_context and Variant.CACRL.uses_shaping
        assert Variant.CACRL_MINUS.uses_context and not Variant.CACRL_MINUS.uses_shaping
        assert not Variant.CSSCA_CRL.uses_context and not Variant.CSSCA_CRL.uses_shaping

    def test_unknown_variant(self, tiny_config):
        agent = build_agent(tiny_config)
        with pytest.raises(ConfigurationError):
            variant_dispatch("ppo", tiny_config, agent.env, agent.streams)

    def test_plain_agent_has_no_context(self, tiny_config):
        agent = build_agent(tiny_config.with_overrides(variant="cssca-crl"))
        assert agent.encoder is None
        assert agent.window is None
        assert agent.policy.input_dim == agent.obs_dim
        assert agent.potentials is None

    def test_context_agent_dims(self, tiny_config):
        agent = build_agent(tiny_config)
        assert agent.policy.input_dim == agent.obs_dim + tiny_config.latent_dim
        assert agent.encoder.input_dim == 2 * agent.obs_dim + tiny_config.num_users + 1
        assert len(agent.critics) == tiny_config.num_users + 1
        assert len(agent.potentials) == tiny_config.num_users


class TestCollection:
    """Tests for experience collection."""

    def test_batch_layout(self, tiny_config):
        agent = build_agent(tiny_config)
        batch = agent.collect()
        N = tiny_config.context_size
        assert len(batch) == tiny_config.batch_size
        assert batch.tuples[0].span == (0, 0)
        for prev, nxt in zip(batch.tuples[:-1], batch.tuples[1:]):
            np.testing.assert_array_equal(prev.next_state, nxt.state)
        for t in batch.tuples:
            lo, hi = t.span
            assert 0 <= lo <= hi <= len(batch.context_rows)
            assert hi - lo <= N
            assert t.xi is not None

    def test_context_reproducible_from_span(self, tiny_config):
        """Every stored z is the reparameterized posterior of its span."""
        agent = build_agent(tiny_config)
        agent.collect()
        batch = agent.collect()
        for t in batch.tuples:
            lo, hi = t.span
            posterior = agent.encoder.posterior(batch.context_rows[lo:hi])
            np.testing.assert_allclose(
                t.state[agent.obs_dim:], reparam_sample(posterior, t.xi), rtol=1e-10, atol=1e-12
            )

    def test_second_batch_starts_with_full_window(self, tiny_config):
        agent = build_agent(tiny_config)
        agent.collect()
        batch = agent.collect()
        assert batch.tuples[0].span == (0, tiny_config.context_size)

    def test_theta_checksum(self, tiny_config):
        agent = build_agent(tiny_config)
        assert agent.collect().theta_checksum == agent.policy.checksum()


class TestPolicyIteration:
    """Tests for one full step of the agent."""

    def test_first_step(self, tiny_config):
        agent = build_agent(tiny_config)
        report = agent.step()
        assert report.iteration == 1
        assert report.phase == PRETRAIN
        assert report.mu == pytest.approx(tiny_config.mu0)
        np.testing.assert_allclose(report.f_hat, report.batch.reshaped_costs().mean(axis=0))
        assert report.branch in ("objective", "feasible")
        assert agent.box.contains(agent.policy.theta, atol=1e-12)
        assert report.theta_checksum != agent.policy.checksum()

    def test_phase_switch(self, tiny_config):
        agent = build_agent(tiny_config)
        assert agent.phase(tiny_config.pretrain_iterations) == PRETRAIN
        assert agent.phase(tiny_config.pretrain_iterations + 1) == DEPLOY

    def test_frozen_after_pretraining(self, tiny_config):
        """With freezing on, deployment steps leave psi and the potentials untouched."""
        agent = build_agent(tiny_config.with_overrides(freeze_ci_after_pretrain=True))
        agent.step()
        psi = agent.encoder.psi.copy()
        phis = [c.phi.copy() for c in agent.potentials]
        report = agent.step()
        assert report.phase == DEPLOY
        np.testing.assert_array_equal(agent.encoder.psi, psi)
        for critic, phi in zip(agent.potentials, phis):
            np.testing.assert_array_equal(critic.phi, phi)

    def test_shaping_only_in_full_variant(self, tiny_config):
        full = build_agent(tiny_config).step()
        minus = build_agent(tiny_config.with_overrides(variant="cacrl-minus")).step()
        assert np.any(full.mean_abs_shaping > 0)
        np.testing.assert_array_equal(minus.mean_abs_shaping, 0.0)

    def test_plain_variant_never_reads_potentials(self, tiny_config):
        agent = build_agent(tiny_config.with_overrides(variant="cssca-crl"))
        report = agent.step()
        assert report.mean_abs_z == 0.0
        assert report.mean_kl == 0.0
        assert all(c.potential_reads == 0 for c in agent.critics)

    def test_evaluation(self, tiny_config):
        agent = build_agent(tiny_config)
        agent.step()
        result = agent.evaluate(30, agent.streams.evaluation_rng())
        assert result.slots == 30
        assert 0.0 <= result.mean_power <= tiny_config.p_max * tiny_config.num_users
        assert np.all((result.dropout_rates >= 0) & (result.dropout_rates <= 1))
        assert np.all(result.dropped <= result.resolved)

    def test_evaluation_uses_mean_actions(self, tiny_config, monkeypatch):
        """Every evaluated slot acts through the policy's mean action."""
        agent = build_agent(tiny_config)
        calls = []
        original = agent.policy.mean_action

        def spy(state):
            calls.append(state)
            return original(state)

        monkeypatch.setattr(agent.policy, "mean_action", spy)
        agent.evaluate(7, agent.streams.evaluation_rng())
        assert len(calls) == 7
        assert calls[0].size == agent.obs_dim + agent.latent_dim
        np.testing.assert_array_equal(calls[0][agent.obs_dim:], 0.0)

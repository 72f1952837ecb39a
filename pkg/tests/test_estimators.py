"""
Tests for step sizes and the sample-average estimators.
"""

import numpy as np
import pytest

from src.core.environment import Action
from src.core.estimators import (
    IterationBatch,
    ObservationTuple,
    StepSchedule,
    estimate_f_tilde,
    estimate_g_tilde,
    step_sizes,
    update_scalar_average,
)
from src.core.networks import DualHeadNet
from src.core.policy import ActionBounds, GaussianPolicy
from src.utils.errors import ConfigurationError

STATE_DIM = 4
K = 1


def make_batch(rng, B=10):
    tuples = []
    for t in range(B):
        costs = rng.standard_normal(K + 1)
        tuples.append(ObservationTuple(
            state=rng.standard_normal(STATE_DIM),
            raw_action=rng.standard_normal(K + 1),
            action=Action(np.array([float(t)]), 0.1),
            log_prob=0.0,
            costs=costs,
            reshaped=costs + np.array([0.0, 0.5]),
            next_state=rng.standard_normal(STATE_DIM),
            dropouts=np.zeros(K),
            resolved=np.zeros(K),
        ))
    return IterationBatch(tuples)


class TestStepSchedule:
    """Tests for the diminishing step sizes."""

    def test_first_iteration(self):
        """At i = 1 every step equals its base value."""
        assert step_sizes(1, StepSchedule()) == pytest.approx((0.5, 1.0, 1e-3))

    def test_decreasing(self):
        sched = StepSchedule()
        steps = np.array([step_sizes(i, sched) for i in range(1, 200)])
        assert np.all(np.diff(steps, axis=0) < 0)

    def test_ratio_vanishes(self):
        """mu_i / eta_i decays with the default exponents."""
        sched = StepSchedule()
        mu1, eta1, _ = step_sizes(1, sched)
        mu, eta, _ = step_sizes(10**6, sched)
        assert mu / eta < 0.3 * mu1 / eta1

    def test_ratio_strictly_decreasing(self):
        sched = StepSchedule()
        steps = np.array([step_sizes(i, sched) for i in range(1, 500)])
        assert np.all(np.diff(steps[:, 0] / steps[:, 1]) < 0)

    def test_mu_squared_tail_is_small(self):
        """The squared mu tail over [1e5, 1e6] is under 1% of the sum up to 1e6."""
        sched = StepSchedule()
        i = np.arange(1, 10**6 + 1, dtype=float)
        mu_sq = (sched.mu0 * i ** (-sched.rho1)) ** 2
        tail = mu_sq[10**5 - 1:].sum()
        assert tail < 0.01 * mu_sq.sum()
        mu, _, _ = step_sizes(10**5, sched)
        assert mu**2 == pytest.approx(mu_sq[10**5 - 1])

    def test_index_starts_at_one(self):
        with pytest.raises(ConfigurationError):
            step_sizes(0, StepSchedule())

    @pytest.mark.parametrize("kwargs", [
        {"mu0": 1.5},
        {"eta0": 0.0},
        {"upsilon0": -1.0},
        {"rho1": 0.6, "rho2": 0.7},
        {"rho3": 0.3},
        {"rho1": 1.0},
        {"rho3": 1.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            StepSchedule(**kwargs).validate()

    def test_unenforced_ordering(self):
        """Without the ordering check any exponents are accepted."""
        StepSchedule(rho1=0.6, rho2=0.7, rho3=0.3, enforce_ordering=False).validate()


class TestValueEstimates:
    """Tests for f_tilde and recursive averaging."""

    def test_f_tilde_uses_reshaped_costs(self, rng):
        batch = make_batch(rng)
        np.testing.assert_allclose(estimate_f_tilde(batch), batch.reshaped_costs().mean(axis=0))
        np.testing.assert_allclose(
            estimate_f_tilde(batch) - batch.costs().mean(axis=0), [0.0, 0.5], atol=1e-12
        )

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            estimate_f_tilde(IterationBatch([]))

    def test_averaging(self):
        prev, new = np.array([1.0, 2.0]), np.array([3.0, 6.0])
        np.testing.assert_allclose(update_scalar_average(prev, new, 1.0), new)
        np.testing.assert_allclose(update_scalar_average(prev, new, 0.0), prev)
        np.testing.assert_allclose(update_scalar_average(prev, new, 0.25), [1.5, 3.0])

    def test_averaging_weight_range(self):
        with pytest.raises(ValueError):
            update_scalar_average(0.0, 1.0, 1.5)


class TestGradientEstimates:
    """Tests for g_tilde."""

    @pytest.fixture
    def policy(self, rng):
        return GaussianPolicy(STATE_DIM, ActionBounds(num_users=K), [5], rng)

    def test_constant_critic(self, policy, rng):
        """A constant Q scales the mean score."""
        batch = make_batch(rng)
        critics = [DualHeadNet(STATE_DIM, K + 1, [4], rng) for _ in range(K + 1)]
        for value, net in zip([2.0, -1.0], critics):
            q = np.zeros_like(net.q_head.values)
            q[-1] = value
            net.q_head = net.q_head.with_values(q)
        g = estimate_g_tilde(batch, policy, critics)
        score = policy.log_prob_grad(batch.states(), batch.raw_actions()) / len(batch)
        assert g.shape == (K + 1, policy.theta.size)
        np.testing.assert_allclose(g[0], 2.0 * score, atol=1e-12)
        np.testing.assert_allclose(g[1], -1.0 * score, atol=1e-12)

    def test_matches_per_tuple_sum(self, policy, rng):
        """The batched estimate equals the average of per-tuple Q * score."""
        batch = make_batch(rng, B=5)
        critics = [DualHeadNet(STATE_DIM, K + 1, [4], rng) for _ in range(K + 1)]
        g = estimate_g_tilde(batch, policy, critics)
        for k, net in enumerate(critics):
            total = np.zeros_like(policy.theta)
            for t in batch.tuples:
                q = net.q_value(t.state[None, :], 1.0 / (1.0 + np.exp(-t.raw_action[None, :])))[0]
                total += q * policy.log_prob_grad(t.state, t.raw_action)
            np.testing.assert_allclose(g[k], total / len(batch), rtol=1e-8, atol=1e-12)


class TestTwoStateBandit:
    """g_tilde against the exact gradient of a two-state, one-step problem."""

    def test_matches_quadrature_gradient(self):
        """With s uniform on two states, g_tilde estimates grad_theta E[Q_k(s, a)]."""
        rng = np.random.default_rng(8)
        state_dim = 2
        policy = GaussianPolicy(state_dim, ActionBounds(num_users=K), [3], rng)
        critics = [DualHeadNet(state_dim, K + 1, [3], rng) for _ in range(K + 1)]
        two_states = rng.standard_normal((2, state_dim))

        nodes, weights = np.polynomial.hermite.hermgauss(30)
        grid = np.stack(np.meshgrid(nodes, nodes, indexing="ij"), axis=-1).reshape(-1, 2)
        grid_w = np.outer(weights, weights).ravel() / np.pi

        def expected_q(theta, net):
            policy.set_theta(theta)
            total = 0.0
            for s in two_states:
                mu, sigma = policy.distribution(s)
                raws = mu + np.sqrt(2.0) * sigma * grid
                q = net.q_value(np.tile(s, (len(grid), 1)), 1.0 / (1.0 + np.exp(-raws)))
                total += 0.5 * float(grid_w @ q)
            return total

        theta = policy.theta.copy()
        h = 1e-5
        exact = np.zeros((K + 1, theta.size))
        for k, net in enumerate(critics):
            for i in range(theta.size):
                e = np.zeros_like(theta)
                e[i] = h
                exact[k, i] = (expected_q(theta + e, net) - expected_q(theta - e, net)) / (2 * h)
        policy.set_theta(theta)

        B = 20_000
        states = two_states[np.arange(B) % 2]
        raws = policy.sample_raw(states, rng)
        batch = IterationBatch([
            ObservationTuple(
                state=states[t], raw_action=raws[t], action=Action(np.zeros(K), 0.1), log_prob=0.0,
                costs=np.zeros(K + 1), reshaped=np.zeros(K + 1), next_state=states[t],
                dropouts=np.zeros(K), resolved=np.zeros(K),
            )
            for t in range(B)
        ])
        estimate = estimate_g_tilde(batch, policy, critics)

        feats = 1.0 / (1.0 + np.exp(-raws))
        for k, net in enumerate(critics):
            q = net.q_value(states, feats)
            terms = np.stack([q[t] * policy.log_prob_grad(states[t], raws[t]) for t in range(0, B, 10)])
            stderr = terms.std(axis=0) / np.sqrt(B)
            assert np.all(np.abs(estimate[k] - exact[k]) <= 6.0 * stderr + 1e-6)


class TestMinibatches:
    """Tests for the contiguous critic split."""

    def test_cover_and_disjoint(self, rng):
        batch = make_batch(rng, B=10)
        parts = batch.minibatches(3)
        assert [len(p) for p in parts] == [3, 3, 4]
        flat = [t for p in parts for t in p.tuples]
        assert all(a is b for a, b in zip(flat, batch.tuples))

    def test_too_many(self, rng):
        with pytest.raises(ValueError):
            make_batch(rng, B=2).minibatches(3)

    def test_powers(self, rng):
        np.testing.assert_allclose(make_batch(rng, B=3).powers(), [0.0, 1.0, 2.0])

"""
Tests for the function approximators.

Checks forward passes against closed forms, reverse-mode gradients
against central differences, and the checkpoint format.
"""

import json

import numpy as np
import pytest

from src.core.networks import (
    DualHeadNet,
    ParamVector,
    init_params,
    load_checkpoint,
    net_backward,
    net_forward,
    param_count,
    positive,
    save_checkpoint,
)
from src.utils.errors import CheckpointError, ShapeError


def central_difference(fn, x, h=1e-6):
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (fn(x + step) - fn(x - step)) / (2 * h)
    return grad


class TestParamVector:
    """Tests for the flat parameter container."""

    def test_param_count(self):
        assert param_count([3, 4, 2]) == 3 * 4 + 4 + 4 * 2 + 2

    def test_length_mismatch(self):
        """Values must match the declared layer widths."""
        with pytest.raises(ShapeError):
            ParamVector(np.zeros(5), (2, 2))

    def test_layers_are_views(self):
        """Layer views share memory with the flat vector."""
        p = ParamVector(np.arange(6.0), (2, 2))
        W, b = p.layers()[0]
        np.testing.assert_array_equal(W, [[0.0, 1.0], [2.0, 3.0]])
        np.testing.assert_array_equal(b, [4.0, 5.0])
        b[:] = 0.0
        assert p.values[-1] == 0.0

    def test_positive_floor(self):
        """Softplus outputs stay strictly positive far in the negative tail."""
        assert positive(-1e3) > 0.0


class TestForward:
    """Tests for net_forward."""

    def test_affine_net(self, rng):
        """A single-layer net is W x + b."""
        p = init_params([3, 2], rng, output_scale=1.0)
        p.layers()[0][1][:] = [0.5, -1.0]
        W, b = p.layers()[0]
        x = rng.standard_normal(3)
        np.testing.assert_allclose(net_forward(p, x), W @ x + b)

    def test_zero_params(self, rng):
        """Zero parameters give a zero output."""
        p = ParamVector(np.zeros(param_count([4, 3, 2])), (4, 3, 2))
        np.testing.assert_array_equal(net_forward(p, rng.standard_normal((5, 4))), np.zeros((5, 2)))

    def test_batched_matches_single(self, rng):
        """Row batching is the same as evaluating rows one by one."""
        p = init_params([3, 5, 2], rng)
        x = rng.standard_normal((4, 3))
        batched = net_forward(p, x)
        for i in range(4):
            np.testing.assert_allclose(batched[i], net_forward(p, x[i]))

    def test_wrong_input_width(self, rng):
        with pytest.raises(ShapeError):
            net_forward(init_params([3, 2], rng), np.zeros(4))


class TestBackward:
    """Reverse-mode gradients against central differences."""

    @pytest.mark.parametrize("activate_last", [False, True])
    def test_parameter_gradient(self, activate_last):
        """Parameter gradients agree with finite differences on 100 random nets."""
        rng = np.random.default_rng(0)
        for _ in range(100):
            sizes = (3, 4, 2)
            p = init_params(sizes, rng, output_scale=1.0)
            x = rng.standard_normal((2, 3))
            cot = rng.standard_normal((2, 2))

            def f(values):
                return float(np.sum(cot * net_forward(ParamVector(values, sizes), x,
                                                      activate_last=activate_last)))

            grad, _ = net_backward(p, x, cot, activate_last=activate_last)
            np.testing.assert_allclose(grad, central_difference(f, p.values), rtol=1e-5, atol=1e-8)

    def test_input_gradient(self, rng):
        """Input gradients agree with finite differences."""
        p = init_params([4, 6, 3], rng, output_scale=1.0)
        x = rng.standard_normal(4)
        cot = rng.standard_normal(3)
        _, g_x = net_backward(p, x, cot)
        fd = central_difference(lambda v: float(cot @ net_forward(p, v)), x)
        np.testing.assert_allclose(g_x, fd, rtol=1e-5, atol=1e-8)

    def test_cotangent_shape(self, rng):
        p = init_params([2, 3], rng)
        with pytest.raises(ShapeError):
            net_backward(p, np.zeros((4, 2)), np.zeros((4, 2)))


class TestDualHeadNet:
    """Tests for the Q/V critic."""

    @pytest.fixture
    def net(self, rng):
        return DualHeadNet(state_dim=5, action_dim=3, hidden_sizes=[6, 4], rng=rng)

    def test_q_gradients(self, net, rng):
        """Q gradients w.r.t. omega and the states match finite differences."""
        s = rng.standard_normal((3, 5))
        a = rng.uniform(size=(3, 3))
        cot = rng.standard_normal(3)
        g_omega, g_states = net.q_backward(s, a, cot)
        omega = net.omega

        def f_omega(values):
            net.set_omega(values)
            return float(cot @ net.q_value(s, a))

        fd_omega = central_difference(f_omega, omega)
        net.set_omega(omega)
        np.testing.assert_allclose(g_omega, fd_omega, rtol=1e-5, atol=1e-8)

        fd_states = central_difference(
            lambda v: float(cot @ net.q_value(v.reshape(3, 5), a)), s.ravel()
        )
        np.testing.assert_allclose(g_states.ravel(), fd_states, rtol=1e-5, atol=1e-8)

    def test_v_gradient(self, net, rng):
        """The potential gradient w.r.t. phi matches finite differences."""
        s = rng.standard_normal((4, 5))
        cot = rng.standard_normal(4)
        g_phi = net.v_backward(s, cot)
        phi = net.phi

        def f(values):
            net.set_phi(values)
            return float(cot @ net.v_value(s))

        fd = central_difference(f, phi)
        net.set_phi(phi)
        np.testing.assert_allclose(g_phi, fd, rtol=1e-5, atol=1e-8)

    def test_heads_are_disjoint(self, net, rng):
        """Changing phi leaves Q untouched."""
        s = rng.standard_normal((2, 5))
        a = rng.uniform(size=(2, 3))
        before = net.q_value(s, a)
        net.set_phi(net.phi + 1.0)
        np.testing.assert_array_equal(net.q_value(s, a), before)

    def test_potential_reads(self, net, rng):
        """Every potential evaluation is counted."""
        s = rng.standard_normal((2, 5))
        net.v_value(s)
        net.v_backward(s, np.ones(2))
        net.q_value(s, np.zeros((2, 3)))
        assert net.potential_reads == 2


class TestCheckpoint:
    """Tests for checkpoint persistence."""

    @pytest.fixture
    def networks(self, rng):
        return {
            "b.net": init_params([3, 2], rng),
            "a.net": init_params([2, 4, 1], rng),
        }

    def test_round_trip(self, tmp_path, networks):
        """Loaded parameters equal the saved ones bit for bit."""
        path = tmp_path / "ckpt" / "iter_00001.ckpt"
        digest = save_checkpoint(path, networks)
        loaded = load_checkpoint(path)
        assert set(loaded) == set(networks)
        for name, p in networks.items():
            assert loaded[name].sizes == p.sizes
            assert loaded[name].checksum() == p.checksum()
        header = json.loads(path.read_bytes().split(b"\n", 1)[0])
        assert header["sha256"] == digest
        assert [n["name"] for n in header["networks"]] == ["a.net", "b.net"]

    def test_tampered_payload(self, tmp_path, networks):
        """A modified payload fails the checksum."""
        path = tmp_path / "x.ckpt"
        save_checkpoint(path, networks)
        data = bytearray(path.read_bytes())
        data[-1] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_garbage_header(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not json\n\x00\x01")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_wrong_format(self, tmp_path, networks):
        """Files of another format are refused."""
        path = tmp_path / "y.ckpt"
        save_checkpoint(path, networks)
        head, payload = path.read_bytes().split(b"\n", 1)
        header = json.loads(head)
        header["format"] = "something-else"
        path.write_bytes(json.dumps(header).encode() + b"\n" + payload)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

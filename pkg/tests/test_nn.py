"""Tests for the MLP substrate: forward/backward, Adam, checkpoints."""

import numpy as np
import pytest

from taxecon.errors import CheckpointError, ConfigError
from taxecon.nn import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    Adam,
    Mlp,
    adam_step,
    gaussian_logprob,
    gaussian_logprob_grads,
    gaussian_sample,
    load_checkpoint,
    save_checkpoint,
    soft_update,
    split_gaussian,
)


class TestForward:
    def test_zeroed_network_outputs_final_bias(self):
        net = Mlp([4, 8, 3], rng=np.random.default_rng(0))
        for w in net.weights:
            w[...] = 0.0
        net.biases[-1][...] = [1.0, -2.0, 0.5]
        out = net.forward(np.ones((5, 4)))
        assert np.array_equal(out, np.tile([1.0, -2.0, 0.5], (5, 1)))

    def test_single_layer_is_affine(self):
        net = Mlp([3, 2], rng=np.random.default_rng(1))
        x = np.random.default_rng(2).normal(size=(7, 3))
        want = x @ net.weights[0] + net.biases[0]
        assert np.allclose(net.forward(x), want, rtol=1e-12)

    def test_one_dim_input_promoted(self):
        net = Mlp([3, 4, 2], rng=np.random.default_rng(3))
        x = np.array([0.1, -0.2, 0.5])
        single = net.forward(x)
        batch = net.forward(x[None, :])
        assert single.shape == (1, 2)
        assert np.array_equal(single, batch)

    def test_parameter_count(self):
        net = Mlp([7, 16, 16, 10])
        assert net.n_parameters == (7 * 16 + 16) + (16 * 16 + 16) + (16 * 10 + 10)

    def test_tanh_activation_bounded_hidden(self):
        net = Mlp([2, 6, 1], hidden_activation="tanh",
                  rng=np.random.default_rng(4))
        _, cache = net.forward(np.random.default_rng(5).normal(size=(9, 2)),
                               want_cache=True)
        hidden = cache[0][2]
        assert np.all(np.abs(hidden) <= 1.0)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            Mlp([4])
        with pytest.raises(ConfigError):
            Mlp([4, 2], hidden_activation="selu")
        with pytest.raises(ConfigError):
            Mlp([4, 2], head="softmax")
        with pytest.raises(ConfigError):
            Mlp([4, 3], head="gaussian")  # odd output width


class TestBackward:
    def finite_difference(self, net, x, loss_weights, eps=1e-6):
        grads = []
        for p in net.parameters:
            g = np.zeros_like(p)
            flat = p.ravel()
            gf = g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = float(np.sum(net.forward(x) * loss_weights))
                flat[i] = orig - eps
                down = float(np.sum(net.forward(x) * loss_weights))
                flat[i] = orig
                gf[i] = (up - down) / (2.0 * eps)
            grads.append(g)
        return grads

    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    def test_gradients_match_finite_differences(self, activation):
        rng = np.random.default_rng(11)
        net = Mlp([4, 10, 6, 3], hidden_activation=activation, rng=rng)
        x = rng.normal(size=(8, 4))
        loss_weights = rng.normal(size=(8, 3))
        out, cache = net.forward(x, want_cache=True)
        analytic = net.backward(cache, loss_weights)
        numeric = self.finite_difference(net, x, loss_weights)
        assert net.n_parameters <= 1000
        for a, n in zip(analytic, numeric):
            scale = max(1.0, float(np.max(np.abs(n))))
            assert np.max(np.abs(a - n)) / scale <= 1e-4

    def test_batch_gradient_is_sum_of_rows(self):
        rng = np.random.default_rng(12)
        net = Mlp([3, 5, 2], rng=rng)
        x = rng.normal(size=(4, 3))
        w = rng.normal(size=(4, 2))
        _, cache = net.forward(x, want_cache=True)
        whole = net.backward(cache, w)
        parts = None
        for i in range(4):
            _, ci = net.forward(x[i], want_cache=True)
            gi = net.backward(ci, w[i])
            parts = gi if parts is None else [p + q for p, q in zip(parts, gi)]
        for a, b in zip(whole, parts):
            assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


class TestAdam:
    def test_hand_traced_first_step(self):
        p = np.array([1.0])
        g = np.array([0.5])
        m = np.zeros(1)
        v = np.zeros(1)
        adam_step(p, g, m, v, t=1, lr=0.1)
        # bias-corrected m_hat = 0.5, v_hat = 0.25
        want = 1.0 - 0.1 * 0.5 / (np.sqrt(0.25) + 1e-8)
        assert p[0] == pytest.approx(want, rel=1e-12)
        assert m[0] == pytest.approx(0.05, rel=1e-12)
        assert v[0] == pytest.approx(0.00025, rel=1e-12)

    def test_optimizer_matches_manual_steps(self):
        rng = np.random.default_rng(13)
        shapes = [(3, 2), (2,)]
        params = [rng.normal(size=s) for s in shapes]
        mirror = [p.copy() for p in params]
        opt = Adam(params, lr=0.01)
        ms = [np.zeros_like(p) for p in mirror]
        vs = [np.zeros_like(p) for p in mirror]
        for t in range(1, 6):
            grads = [rng.normal(size=s) for s in shapes]
            opt.step(grads)
            for p, g, m, v in zip(mirror, grads, ms, vs):
                adam_step(p, g, m, v, t, 0.01)
        for a, b in zip(params, mirror):
            assert np.array_equal(a, b)

    def test_descends_a_quadratic(self):
        p = np.array([5.0])
        opt = Adam([p], lr=0.1)
        for _ in range(500):
            opt.step([2.0 * p])  # d/dp of p^2
        assert abs(p[0]) < 0.05

    def test_updates_live_references(self):
        net = Mlp([2, 3], rng=np.random.default_rng(14))
        before = net.weights[0].copy()
        opt = Adam(net.parameters, lr=0.05)
        opt.step([np.ones_like(p) for p in net.parameters])
        assert not np.array_equal(net.weights[0], before)


class TestSoftUpdate:
    def test_polyak_formula(self):
        online = Mlp([3, 4, 2], rng=np.random.default_rng(15))
        target = Mlp([3, 4, 2], rng=np.random.default_rng(16))
        snapshot = [p.copy() for p in target.parameters]
        soft_update(target, online, tau=0.25)
        for pt, ps, po in zip(target.parameters, snapshot, online.parameters):
            assert np.allclose(pt, 0.75 * ps + 0.25 * po, rtol=1e-12)

    def test_tau_one_copies(self):
        online = Mlp([2, 2], rng=np.random.default_rng(17))
        target = Mlp([2, 2], rng=np.random.default_rng(18))
        soft_update(target, online, tau=1.0)
        for pt, po in zip(target.parameters, online.parameters):
            assert np.allclose(pt, po, rtol=1e-15)


class TestGaussianHead:
    def test_split_clamps_log_std(self):
        out = np.array([[1.0, -2.0, -9.0, 7.0]])
        mean, log_std = split_gaussian(out)
        assert np.array_equal(mean, [[1.0, -2.0]])
        assert log_std[0, 0] == LOG_STD_MIN
        assert log_std[0, 1] == LOG_STD_MAX

    def test_sample_reproducible(self):
        mean = np.zeros((4, 2))
        log_std = np.full((4, 2), -1.0)
        a = gaussian_sample(mean, log_std, np.random.default_rng(19))
        b = gaussian_sample(mean, log_std, np.random.default_rng(19))
        assert np.array_equal(a, b)
        assert a.shape == (4, 2)

    def test_logprob_standard_normal_at_mean(self):
        lp = gaussian_logprob(np.zeros((1, 3)), np.zeros((1, 3)),
                              np.zeros((1, 3)))
        assert lp[0] == pytest.approx(-1.5 * np.log(2 * np.pi), rel=1e-12)

    def test_logprob_matches_density_formula(self):
        rng = np.random.default_rng(20)
        mean = rng.normal(size=(6, 2))
        log_std = rng.uniform(-1.0, 0.5, size=(6, 2))
        x = rng.normal(size=(6, 2))
        want = np.sum(
            -0.5 * ((x - mean) / np.exp(log_std)) ** 2
            - log_std - 0.5 * np.log(2 * np.pi), axis=-1)
        assert np.allclose(gaussian_logprob(mean, log_std, x), want,
                           rtol=1e-12)

    def test_logprob_grads_match_finite_differences(self):
        rng = np.random.default_rng(21)
        mean = rng.normal(size=(3, 2))
        log_std = rng.uniform(-1.0, 0.5, size=(3, 2))
        x = rng.normal(size=(3, 2))
        d_mean, d_log_std = gaussian_logprob_grads(mean, log_std, x)
        eps = 1e-6
        for i in range(3):
            for j in range(2):
                bump = np.zeros_like(mean)
                bump[i, j] = eps
                fd = (gaussian_logprob(mean + bump, log_std, x)[i]
                      - gaussian_logprob(mean - bump, log_std, x)[i]) / (2 * eps)
                assert d_mean[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-8)
                fd = (gaussian_logprob(mean, log_std + bump, x)[i]
                      - gaussian_logprob(mean, log_std - bump, x)[i]) / (2 * eps)
                assert d_log_std[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-8)


class TestCheckpoints:
    def make_nets(self):
        return {
            "actor": Mlp([7, 16, 10], head="gaussian",
                         rng=np.random.default_rng(22)),
            "critic": Mlp([14, 8, 1], hidden_activation="tanh",
                          rng=np.random.default_rng(23)),
        }

    def test_round_trip_bitwise(self, tmp_path):
        path = tmp_path / "ckpt.bin"
        nets = self.make_nets()
        save_checkpoint(path, nets)
        loaded = load_checkpoint(path)
        assert set(loaded) == {"actor", "critic"}
        for name, net in nets.items():
            other = loaded[name]
            assert other.dims == net.dims
            assert other.hidden_activation == net.hidden_activation
            assert other.head == net.head
            for a, b in zip(net.parameters, other.parameters):
                assert np.array_equal(a, b)
        x = np.random.default_rng(24).normal(size=(3, 7))
        assert np.array_equal(nets["actor"].forward(x),
                              loaded["actor"].forward(x))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "ckpt.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "ckpt.bin"
        save_checkpoint(path, self.make_nets())
        raw = bytearray(path.read_bytes())
        raw[4] = 99  # version field
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "ckpt.bin"
        save_checkpoint(path, self.make_nets())
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 40])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_copy_is_deep(self):
        net = Mlp([3, 4, 2], rng=np.random.default_rng(25))
        clone = net.copy()
        clone.weights[0][0, 0] += 1.0
        assert net.weights[0][0, 0] != clone.weights[0][0, 0]
        clone.weights[0][0, 0] -= 1.0
        x = np.random.default_rng(26).normal(size=(2, 3))
        assert np.array_equal(net.forward(x), clone.forward(x))

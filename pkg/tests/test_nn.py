import numpy as np
import pytest

from infoflow import nn
from infoflow.ddpg import DdpgConfig, make_agent
from infoflow.worldmodel import make_extended_model, make_forward_model

from gradcheck import fd_probe, loop_forward, max_relative_error


def repo_networks(seed=7):
    rng = np.random.default_rng(seed)
    agent = make_agent(rng, DdpgConfig())
    return {
        "actor": agent.actor,
        "f": make_forward_model(rng).net,
        "k": make_extended_model(rng).net,
        "critic": agent.critic,
    }


class TestForward:
    def test_zero_network_outputs_zero(self, backend):
        net = nn.MlpNet((3, 5, 2))
        np.testing.assert_array_equal(nn.forward(net, [1.0, -2.0, 3.0]), np.zeros(2))

    def test_identity_layer(self, backend):
        net = nn.MlpNet((2, 2))
        net.weights[0][...] = np.eye(2)
        np.testing.assert_array_equal(nn.forward(net, [1.0, 2.0]), [1.0, 2.0])

    def test_matches_loop_oracle(self, backend):
        net = nn.init_mlp((2, 16, 1), np.random.default_rng(42))
        x = np.array([0.5, -0.5])
        np.testing.assert_allclose(nn.forward(net, x), loop_forward(net, x), rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("name", ["actor", "f", "k", "critic"])
    def test_repo_shapes_match_loop_oracle(self, backend, name, rng):
        net = repo_networks()[name]
        x = rng.uniform(-1, 1, size=net.n_inputs)
        np.testing.assert_allclose(nn.forward(net, x), loop_forward(net, x), rtol=1e-10, atol=1e-12)

    def test_batch_rows_match_single(self, backend, rng):
        net = nn.init_mlp((4, 8, 3), rng)
        X = rng.normal(size=(5, 4))
        batch = nn.forward(net, X)
        for i in range(5):
            np.testing.assert_allclose(batch[i], nn.forward(net, X[i]), rtol=1e-13)

    def test_deterministic(self, backend, rng):
        net = nn.init_mlp((4, 64, 64, 2), rng)
        x = rng.normal(size=4)
        assert np.array_equal(nn.forward(net, x), nn.forward(net, x))

    def test_no_parameter_mutation(self, backend, rng):
        net = nn.init_mlp((4, 8, 2), rng)
        before = net.params.copy()
        nn.forward(net, rng.normal(size=(3, 4)))
        assert np.array_equal(before, net.params)

    def test_input_shape_error(self, backend):
        net = nn.MlpNet((3, 2))
        with pytest.raises(nn.ShapeError):
            nn.forward(net, [1.0, 2.0])


class TestGrad:
    def test_zero_output_gradient(self, backend, rng):
        net = nn.init_mlp((3, 6, 2), rng)
        g = nn.grad(net, rng.normal(size=3), np.zeros(2))
        assert np.all(g == 0.0)

    def test_linear_chain_rule(self, backend):
        # L = (w*x + b - target)^2, w=2, b=0, x=1, target=0 -> dL/dw = 2*(2*1-0)*1 = 4
        net = nn.MlpNet((1, 1))
        net.weights[0][0, 0] = 2.0
        x = np.array([1.0])
        y = nn.forward(net, x)
        g = nn.grad(net, x, 2.0 * (y - 0.0))
        (dW, db), = net.unflatten(g)
        assert dW[0, 0] == pytest.approx(4.0)
        assert db[0] == pytest.approx(4.0)

    def test_finite_differences_small_net(self, backend):
        net = nn.init_mlp((2, 8, 2), np.random.default_rng(3))
        rng = np.random.default_rng(4)
        x = rng.normal(size=2)
        dout = rng.normal(size=2)
        g = nn.grad(net, x, dout)
        for idx in range(net.params.size):
            num = fd_probe(net, x, dout, idx)
            assert abs(g[idx] - num) / max(abs(g[idx]), abs(num), 1e-6) < 1e-4

    @pytest.mark.parametrize("name", ["actor", "f", "k", "critic"])
    def test_finite_differences_repo_shapes(self, backend, name):
        net = repo_networks()[name]
        assert max_relative_error(net, np.random.default_rng(11), n_probes=40) < 1e-4

    def test_relu_hidden_and_scaled_tanh_output(self, backend):
        net = nn.init_mlp((3, 10, 10, 2), np.random.default_rng(5), "relu", "tanh", 10.0)
        assert max_relative_error(net, np.random.default_rng(6), n_probes=60) < 1e-4

    def test_input_gradient(self, backend, rng):
        net = nn.init_mlp((3, 7, 2), rng)
        x = rng.normal(size=3)
        dout = rng.normal(size=2)
        _, cache = nn.forward_cached(net, x)
        _, dx = nn.backward(net, cache, dout)
        h = 1e-6
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            num = (dout @ nn.forward(net, x + e) - dout @ nn.forward(net, x - e)) / (2 * h)
            assert dx[i] == pytest.approx(num, rel=1e-6, abs=1e-9)

    def test_batch_gradient_is_sum_of_rows(self, backend, rng):
        net = nn.init_mlp((2, 5, 2), rng)
        X = rng.normal(size=(4, 2))
        D = rng.normal(size=(4, 2))
        total = sum(nn.grad(net, X[i], D[i]) for i in range(4))
        np.testing.assert_allclose(nn.grad(net, X, D), total, rtol=1e-12, atol=1e-14)

    def test_shape_mismatch(self, backend, rng):
        net = nn.init_mlp((2, 3, 2), rng)
        with pytest.raises(nn.ShapeError):
            nn.grad(net, np.zeros(2), np.zeros(3))


class TestBackendParity:
    def test_compiled_matches_python(self, rng):
        pytest.importorskip("infoflow._kernels")
        from infoflow import _kernels, _kernels_py
        net = nn.init_mlp((6, 64, 64, 2), rng, "relu", "tanh", 10.0)
        X = rng.normal(size=(64, 6))
        D = rng.normal(size=(64, 2))
        outs = []
        for mod in (_kernels, _kernels_py):
            work = np.empty(64 * sum(net.layer_sizes))
            y = mod.mlp_forward(net.params, net._sizes, net._hid, net._out, 10.0, X, work)
            g = np.empty_like(net.params)
            dx = np.empty((64, 6))
            mod.mlp_backward(net.params, net._sizes, net._hid, net._out, 10.0, work, D, g, dx)
            outs.append((y, g, dx))
        for a, b in zip(*outs):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


class TestOptimizer:
    def test_zero_gradients_leave_parameters(self, backend, rng):
        net = nn.init_mlp((3, 4, 2), rng)
        before = net.params.copy()
        opt = nn.Adam.for_net(net, 1e-3)
        nn.optimizer_step(net, np.zeros_like(net.params), opt)
        assert np.array_equal(net.params, before)
        assert opt.step_count == 1

    def test_first_step_closed_form(self, backend, rng):
        # zero moments: m_hat = g, v_hat = g^2  ->  delta = -lr * g / (|g| + eps)
        net = nn.init_mlp((2, 3, 1), rng)
        before = net.params.copy()
        g = rng.normal(size=net.params.size)
        lr = 0.01
        opt = nn.Adam.for_net(net, lr)
        nn.optimizer_step(net, g, opt)
        np.testing.assert_allclose(net.params, before - lr * g / (np.abs(g) + 1e-8), rtol=1e-12)

    def test_step_count(self, backend, rng):
        net = nn.init_mlp((2, 3, 1), rng)
        opt = nn.Adam.for_net(net, 1e-3)
        g = np.ones_like(net.params)
        nn.optimizer_step(net, g, opt)
        nn.optimizer_step(net, g, opt)
        assert opt.step_count == 2

    def test_accumulator_shapes(self, rng):
        net = nn.init_mlp((4, 64, 64, 2), rng)
        opt = nn.Adam.for_net(net, 1e-3)
        assert opt.m.shape == opt.v.shape == net.params.shape

    def test_non_finite_gradient_names_parameter(self, rng):
        net = nn.init_mlp((2, 3, 1), rng)
        g = np.zeros_like(net.params)
        g[7] = np.nan
        with pytest.raises(nn.NumericError, match=r"layer0\.bias\[1\]"):
            nn.optimizer_step(net, g, nn.Adam.for_net(net, 1e-3))


class TestPolyak:
    def test_tau_one_is_exact_copy(self, backend, rng):
        src = nn.init_mlp((4, 64, 64, 2), rng)
        tgt = nn.init_mlp((4, 64, 64, 2), rng)
        nn.polyak_update(tgt, src, 1.0)
        assert tgt.params.tobytes() == src.params.tobytes()

    def test_half(self, backend):
        src = nn.MlpNet((1, 1), params=np.array([2.0, 2.0]))
        tgt = nn.MlpNet((1, 1), params=np.array([0.0, 0.0]))
        nn.polyak_update(tgt, src, 0.5)
        assert np.array_equal(tgt.params, [1.0, 1.0])

    def test_exact_convex_combination(self, backend, rng):
        src = nn.init_mlp((3, 4, 2), rng)
        tgt = nn.init_mlp((3, 4, 2), rng)
        expected = 0.3 * src.params + (1 - 0.3) * tgt.params
        nn.polyak_update(tgt, src, 0.3)
        np.testing.assert_allclose(tgt.params, expected, rtol=1e-15, atol=1e-17)

    def test_geometric_convergence(self, backend, rng):
        src = nn.init_mlp((3, 4, 2), rng)
        tgt = nn.init_mlp((3, 4, 2), rng)
        gap0 = np.max(np.abs(tgt.params - src.params))
        for _ in range(100):
            nn.polyak_update(tgt, src, 0.2)
        gap = np.max(np.abs(tgt.params - src.params))
        assert gap < 1e-6
        assert gap <= gap0 * 0.8 ** 100 * (1 + 1e-6) + 1e-15

    def test_architecture_mismatch(self, rng):
        with pytest.raises(nn.ShapeError):
            nn.polyak_update(nn.init_mlp((3, 4, 2), rng), nn.init_mlp((3, 5, 2), rng), 0.5)


class TestSnapshots:
    def test_round_trip_is_lossless(self, tmp_path, rng):
        net = nn.init_mlp((4, 64, 64, 2), rng, "relu", "tanh", 10.0)
        nn.save_params(net, tmp_path / "net.model")
        back = nn.load_params(tmp_path / "net.model")
        assert back.same_architecture(net)
        assert back.params.tobytes() == net.params.tobytes()

    def test_header_records_layers(self, tmp_path, rng):
        nn.save_params(nn.init_mlp((6, 64, 64, 2), rng), tmp_path / "k.model")
        first = (tmp_path / "k.model").read_text().splitlines()[0]
        assert first.startswith("# infoflow-mlp layers=6,64,64,2")

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.model").write_text("hello\n1.0\n")
        with pytest.raises(ValueError):
            nn.load_params(tmp_path / "x.model")

import numpy as np
import pytest

from cfrl import net
from cfrl.errors import DivergenceError


def fd_gradient(loss_fn, arr, h=1e-5):
    """Central finite differences of loss_fn with respect to arr, in place."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        ix = it.multi_index
        old = arr[ix]
        arr[ix] = old + h
        up = loss_fn()
        arr[ix] = old - h
        down = loss_fn()
        arr[ix] = old
        g[ix] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-8)
    return np.max(np.abs(a - b) / denom)


class TestForward:
    def test_zero_net_outputs_zero(self, rng):
        n = net.build_net([3, 30, 1], ["relu", "identity"], rng)
        for lay in n.layers:
            lay.W[:] = 0
            lay.b[:] = 0
        assert np.allclose(n.forward(np.array([1.0, -2.0, 0.5])), 0.0)

    def test_identity_layer(self):
        lay = net.Layer(np.eye(4), np.zeros(4), "identity")
        n = net.DenseNet([lay])
        x = np.array([1.0, 2.0, -3.0, 0.25])
        assert np.array_equal(n.forward(x), x)

    def test_hand_computed_1_1_1(self):
        n = net.DenseNet([
            net.Layer(np.array([[2.0]]), np.array([-1.0]), "relu"),
            net.Layer(np.array([[3.0]]), np.array([0.0]), "identity"),
        ])
        assert n.forward(np.array([1.0]))[0] == pytest.approx(3.0)

    def test_shape_mismatch(self, rng):
        n = net.build_net([3, 5, 1], ["relu", "identity"], rng)
        with pytest.raises(ValueError):
            n.forward(np.zeros(4))


class TestBackward:
    def test_zero_output_grad(self, rng):
        n = net.build_net([3, 8, 2], ["tanh", "identity"], rng)
        grads, gx = n.backward(rng.normal(size=3), np.zeros(2))
        assert np.allclose(gx, 0)
        for dW, db in grads:
            assert np.allclose(dW, 0) and np.allclose(db, 0)

    def test_linear_patterns(self):
        W = np.array([[1.0, -2.0], [0.5, 4.0]])
        n = net.DenseNet([net.Layer(W.copy(), np.zeros(2), "identity")])
        x = np.array([3.0, -1.0])
        grads, gx = n.backward(x, np.array([1.0, 1.0]))
        # dL/dW = gy outer x, dL/dx = W^T gy
        assert np.allclose(grads[0][0], np.outer([1, 1], x))
        assert np.allclose(gx, W.T @ np.ones(2))

    def test_matches_finite_differences(self, rng):
        n = net.build_net([4, 12, 2], ["relu", "tanh"], rng)
        x = rng.normal(size=4)
        c = rng.normal(size=2)
        loss = lambda: float(c @ n.forward(x))
        grads, gx = n.backward(x, c)
        assert rel_err(gx, fd_gradient(loss, x)) <= 1e-4
        for k, lay in enumerate(n.layers):
            assert rel_err(grads[k][0], fd_gradient(loss, lay.W)) <= 1e-4
            assert rel_err(grads[k][1], fd_gradient(loss, lay.b)) <= 1e-4

    def test_batched_equals_summed_singles(self, rng):
        n = net.build_net([3, 6, 1], ["relu", "identity"], rng)
        xs = rng.normal(size=(5, 3))
        gy = rng.normal(size=(5, 1))
        batch_grads, batch_gx = n.backward(xs, gy)
        acc = [ (np.zeros_like(l.W), np.zeros_like(l.b)) for l in n.layers ]
        for i in range(5):
            g, gx = n.backward(xs[i], gy[i])
            for k in range(len(acc)):
                acc[k] = (acc[k][0] + g[k][0], acc[k][1] + g[k][1])
            assert np.allclose(gx, batch_gx[i])
        for k in range(len(acc)):
            assert np.allclose(acc[k][0], batch_grads[k][0])
            assert np.allclose(acc[k][1], batch_grads[k][1])

    def test_directional_derivative(self, rng):
        n = net.build_net([3, 10, 1], ["relu", "tanh"], rng)
        x = rng.normal(size=3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        _, gx = n.backward(x, np.ones(1))
        h = 1e-6
        fd = (n.forward(x + h * d)[0] - n.forward(x - h * d)[0]) / (2 * h)
        assert abs(float(gx @ d) - fd) <= 1e-5


class TestAdam:
    def test_zero_grads_no_change(self, rng):
        p = rng.normal(size=(3, 3))
        ref = p.copy()
        opt = net.Adam([p], lr=0.01)
        opt.step([np.zeros_like(p)])
        assert np.array_equal(p, ref)

    def test_first_step_magnitude(self):
        # bias-corrected first update is lr * g/|g| up to epsilon
        p = np.array([1.0])
        opt = net.Adam([p], lr=0.002)
        opt.step([np.array([0.37])])
        assert p[0] == pytest.approx(1.0 - 0.002, rel=1e-6)

    def test_deterministic(self, rng):
        g = rng.normal(size=4)
        p1, p2 = np.ones(4), np.ones(4)
        for p in (p1, p2):
            opt = net.Adam([p], lr=0.01)
            opt.step([g.copy()])
            opt.step([g.copy()])
        assert np.array_equal(p1, p2)

    def test_non_finite_gradient_rejected(self):
        p = np.ones(2)
        opt = net.Adam([p], lr=0.01)
        with pytest.raises(DivergenceError):
            opt.step([np.array([1.0, np.nan])])


class TestSoftUpdate:
    def test_tau_one_copies(self, rng):
        a = net.build_net([2, 4, 1], ["relu", "identity"], rng)
        b = net.build_net([2, 4, 1], ["relu", "identity"], rng)
        net.soft_update(b, a, tau=1.0)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa, pb)

    def test_geometric_contraction(self, rng):
        main = net.build_net([3, 5, 1], ["relu", "identity"], rng)
        target = net.build_net([3, 5, 1], ["relu", "identity"], rng)
        tau = 0.01
        diff0 = [pt - pm for pt, pm in zip(target.parameters(), main.parameters())]
        for _ in range(25):
            net.soft_update(target, main, tau)
        for d0, pt, pm in zip(diff0, target.parameters(), main.parameters()):
            expected = (1 - tau) ** 25 * d0
            assert np.allclose(pt - pm, expected, rtol=1e-12, atol=1e-15)


class TestSerialization:
    def test_roundtrip_exact(self, rng, tmp_path):
        n = net.build_net([4, 30, 1], ["relu", "tanh"], rng)
        path = tmp_path / "net.json"
        net.save_net(n, path)
        m = net.load_net(path)
        for a, b in zip(n.parameters(), m.parameters()):
            assert np.array_equal(a, b)
        assert [l.activation for l in m.layers] == [l.activation for l in n.layers]

    def test_version_guard(self, rng, tmp_path):
        n = net.build_net([2, 3, 1], ["relu", "identity"], rng)
        doc = net.net_to_dict(n)
        doc["version"] = 99
        with pytest.raises(ValueError):
            net.net_from_dict(doc)


def test_init_ranges(rng):
    n = net.build_net([10, 30, 1], ["relu", "tanh"], rng)
    assert np.max(np.abs(n.layers[0].W)) <= 1 / np.sqrt(10)
    assert np.max(np.abs(n.layers[1].W)) <= 3e-3
    assert np.max(np.abs(n.layers[1].b)) <= 3e-3

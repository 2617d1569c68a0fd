import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import close, mlp_gradient_errors, random_mlp
from proposal_programs.errors import ShapeMismatch
from proposal_programs.nnet import MLP
from proposal_programs.params import ParamStore


def tiny(w_h=0.0, b_h=0.0, w_out=2.0, b_out=-1.0):
    net = MLP()
    store = ParamStore(
        {
            net.h_weights: [[w_h]],
            net.h_biases: [b_h],
            net.out_weights: [[w_out]],
            net.out_biases: [b_out],
        }
    )
    return net, store


def zero_net(in_dim, hidden, out_dim):
    net = MLP()
    store = net.init_params(ParamStore(), in_dim, hidden, out_dim)
    for n in net.names:
        store[n] = np.zeros_like(store[n])
    return net, store


class TestForward:
    def test_zero_net(self):
        net, store = zero_net(3, 5, 2)
        out, cache = net.forward(store, [1.0, -7.0, 40.0])
        assert np.array_equal(out, [0.0, 0.0]) and np.all(cache.hidden == 0.5)

    def test_one_one_one(self):
        net, store = tiny()
        out, _ = net.forward(store, [123.0])
        assert out.tolist() == [0.0]

    def test_matches_high_precision_formula(self):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 40
        rng = np.random.default_rng(42)
        net, store, x, _ = random_mlp(rng, 4, 8, 2)
        out, _ = net.forward(store, x)
        wh, bh, wo, bo = (store[n] for n in net.names)
        for r in range(2):
            acc = mp.mpf(float(bo[r]))
            for j in range(8):
                a = mp.mpf(float(bh[j])) + mp.fsum(mp.mpf(float(wh[j, i])) * mp.mpf(float(x[i])) for i in range(4))
                acc += mp.mpf(float(wo[r, j])) / (1 + mp.exp(-a))
            assert out[r] == pytest.approx(float(acc), rel=1e-13, abs=1e-14)

    def test_input_shape_mismatch(self):
        net, store = zero_net(3, 2, 1)
        with pytest.raises(ShapeMismatch):
            net.forward(store, [1.0, 2.0])

    def test_inconsistent_tensors(self):
        net, store = zero_net(3, 2, 1)
        store[net.out_biases] = np.zeros(2)
        with pytest.raises(ShapeMismatch):
            net.shapes(store)

    def test_init_scaling(self):
        net = MLP("p.")
        store = net.init_params(ParamStore(), 400, 300, 2, seed=0)
        assert net.shapes(store) == (400, 300, 2)
        assert store["p.h_weights"].std() == pytest.approx(1 / 20, rel=0.02)
        assert not store["p.h_biases"].any() and not store["p.out_biases"].any()


class TestBackward:
    def test_zero_output_grad(self):
        net, store, x, _ = random_mlp(np.random.default_rng(0), 3, 4, 2)
        _, cache = net.forward(store, x)
        grads = net.backward(store, cache, np.zeros(2))
        assert all(not g.any() for g in grads.values())

    @pytest.mark.parametrize("w_out", [2.0, -0.75])
    def test_hidden_bias_at_zero(self, w_out):
        net, store = tiny(w_out=w_out)
        _, cache = net.forward(store, [3.0])
        assert net.backward(store, cache, [1.0])[net.h_biases][0] == 0.25 * w_out

    def test_output_grad_shape_mismatch(self):
        net, store = tiny()
        _, cache = net.forward(store, [0.0])
        with pytest.raises(ShapeMismatch):
            net.backward(store, cache, [1.0, 2.0])

    def test_param_grads_drop_input(self):
        net, store = tiny()
        _, cache = net.forward(store, [0.0])
        assert set(net.param_grads(store, cache, [1.0])) == set(net.names)

    def test_4_8_2_finite_differences(self):
        net, store, x, d = random_mlp(np.random.default_rng(7), 4, 8, 2)
        for name, a, n in mlp_gradient_errors(net, store, x, d, h=1e-5):
            assert close(a, n, rel=1e-4, abs_=1e-7), (name, a, n)

    def test_random_networks_finite_differences(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            net, store, x, d = random_mlp(rng)
            for name, a, n in mlp_gradient_errors(net, store, x, d, h=1e-5):
                assert close(a, n, rel=1e-4, abs_=1e-7), (name, a, n)


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1))
def test_forward_is_pure(seed):
    net, store, x, _ = random_mlp(np.random.default_rng(seed))
    before = store.copy()
    x0 = x.copy()
    a, _ = net.forward(store, x)
    b, _ = net.forward(store, x)
    assert np.array_equal(a, b) and np.array_equal(x, x0)
    assert all(np.array_equal(store[n], before[n]) for n in net.names)

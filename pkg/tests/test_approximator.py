import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emecs_rl.approximator import (
    DimensionError,
    InitSpec,
    LinearModel,
    ReluNet,
    init_relu_net,
    load_checkpoint,
    save_checkpoint,
)
from emecs_rl.envs import MC_BOUNDS
from emecs_rl.harness.heatmap import count_components, response_maps
from emecs_rl.transforms import SparseBinary, make_transform


def _finite_difference(net, x, head, h=1e-5):
    g = np.empty(net.num_params())
    for i in range(net.num_params()):
        keep = net.w[i]
        net.w[i] = keep + h
        up = net(x)[head]
        net.w[i] = keep - h
        down = net(x)[head]
        net.w[i] = keep
        g[i] = (up - down) / (2 * h)
    return g


def _away_from_kinks(net, x, margin=1e-3):
    return np.all(np.abs(net.preactivation(x)) > margin)


class TestShapes:
    @pytest.mark.parametrize("shape,count", [((2, 135, 1), 541), ((3, 100, 1), 501), ((80, 5, 1), 411)])
    def test_param_counts(self, shape, count):
        assert ReluNet(*shape).num_params() == count

    def test_flat_views_roundtrip(self):
        net = init_relu_net(3, 4, 2, InitSpec(seed=1))
        parts = np.concatenate([net.W1.ravel(), net.b1, net.W2.ravel(), net.b2])
        assert np.array_equal(parts, net.w)
        assert np.array_equal(ReluNet(3, 4, 2, w=parts).w, net.w)

    def test_dimension_mismatch(self):
        net = ReluNet(3, 2, 1)
        with pytest.raises(DimensionError):
            net(np.zeros(4))
        with pytest.raises(DimensionError):
            LinearModel(5, 1)(SparseBinary([1], 6))


class TestInit:
    def test_zero_weight_std(self):
        net = init_relu_net(3, 50, 2, InitSpec(weight_std=0.0, bias_std=0.1, seed=0))
        assert not net.W1.any() and not net.W2.any()
        assert net.b1.std() > 0

    def test_upward_dims_nonnegative(self):
        net = init_relu_net(3, 200, 1, InitSpec(0.5, 0.1, seed=3, upward_dims=[2]))
        assert np.all(net.W1[:, 2] >= 0)
        assert np.any(net.W1[:, 0] < 0)

    def test_deterministic(self):
        a = init_relu_net(3, 10, 2, InitSpec(seed=9))
        b = init_relu_net(3, 10, 2, InitSpec(seed=9))
        assert np.array_equal(a.w, b.w)

    def test_upward_dims_validated(self):
        with pytest.raises(ValueError):
            init_relu_net(3, 10, 1, InitSpec(upward_dims=[3]))

    def test_init_moments(self):
        net = init_relu_net(10, 1000, 1, InitSpec(0.5, 0.1, seed=0))
        assert abs(net.W1.std() - 0.5) < 0.01
        assert abs(net.b1.std() - 0.1) < 0.01


class TestForward:
    def test_zero_net(self):
        assert np.array_equal(ReluNet(4, 3, 2)(np.ones(4)), [0.0, 0.0])

    def test_relu_identity_net(self):
        net = ReluNet(1, 1, 1, w=np.array([1.0, 0.0, 1.0, 0.0]))
        assert net(np.array([-2.0]))[0] == 0.0
        assert net(np.array([3.0]))[0] == 3.0

    def test_sparse_equals_dense(self):
        net = init_relu_net(8, 6, 2, InitSpec(seed=2))
        sparse = SparseBinary([0, 5], 8)
        assert np.array_equal(net(sparse), net(sparse.to_dense()))

    def test_batch_matches_single(self):
        net = init_relu_net(3, 7, 2, InitSpec(seed=4))
        X = np.random.default_rng(0).normal(size=(20, 3))
        assert np.allclose(net.forward_batch(X), [net(x) for x in X], atol=1e-12)

    def test_positive_homogeneity(self):
        net = init_relu_net(3, 7, 2, InitSpec(seed=4))
        x = np.array([0.3, -0.2, 0.5])
        base = net(x) - net.b2
        net.W2 *= 3.0
        assert np.allclose(net(x) - net.b2, 3.0 * base, rtol=1e-14, atol=0)

    def test_node_response_half_space(self):
        net = init_relu_net(2, 3, 1, InitSpec(seed=0))
        rng = np.random.default_rng(1)
        for x in rng.uniform(-1, 1, size=(200, 2)):
            r = net.node_response(1, x)
            pre = net.W1[1] @ x + net.b1[1]
            assert (r > 0) == (pre > 0) and r >= 0
        with pytest.raises(IndexError):
            net.node_response(3, np.zeros(2))


class TestGradient:
    def test_finite_difference_small_net(self):
        rng = np.random.default_rng(0)
        checked = 0
        while checked < 100:
            net = init_relu_net(3, 5, 2, InitSpec(0.5, 0.1, seed=int(rng.integers(1 << 30))))
            x = rng.normal(size=3)
            if not _away_from_kinks(net, x):
                continue
            for head in (0, 1):
                analytic = net.gradient(x, head)
                numeric = _finite_difference(net, x, head)
                scale = np.maximum(np.abs(numeric), 1e-8)
                nonzero = np.abs(numeric) > 1e-8
                assert np.all(np.abs(analytic - numeric)[~nonzero] < 1e-8)
                assert np.max(np.abs(analytic - numeric)[nonzero] / scale[nonzero]) < 1e-6
            checked += 1

    def test_other_heads_zero(self):
        net = init_relu_net(3, 5, 3, InitSpec(seed=1))
        g = net.gradient(np.array([0.1, 0.2, 0.3]), head=1)
        W2 = g[net._slices["W2"]].reshape(3, 5)
        b2 = g[net._slices["b2"]]
        assert not W2[0].any() and not W2[2].any()
        assert list(b2) == [0.0, 1.0, 0.0]

    def test_linear_gradient_is_features(self):
        model = LinearModel(4, 2)
        x = np.array([1.0, -2.0, 0.5, 3.0])
        g = model.gradient(x, 1)
        assert np.array_equal(g[4:], x) and not g[:4].any()

    def test_relu_kink_derivative_zero(self):
        net = ReluNet(1, 1, 1, w=np.array([1.0, 0.0, 2.0, 0.0]))
        g = net.gradient(np.array([0.0]))
        assert g[0] == 0.0 and g[1] == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(0, 1), st.floats(-5, 5), st.floats(1e-4, 0.1))
    def test_fused_update_matches_dense(self, seed, head, target, alpha):
        rng = np.random.default_rng(seed)
        for sparse in (False, True):
            net = init_relu_net(6, 8, 2, InitSpec(0.5, 0.1, seed=seed))
            x = SparseBinary(np.sort(rng.choice(6, 3, replace=False)), 6) if sparse else rng.normal(size=6)
            ref = net.copy()
            g = ref.gradient(x, head)
            delta_ref = target - ref(x)[head]
            ref.w += alpha * delta_ref * g
            delta, value, factors = net.fused_update(x, head, target, alpha, 1e8)
            assert delta == pytest.approx(delta_ref, abs=1e-12)
            assert np.allclose(net.w, ref.w, atol=1e-12, rtol=0)
            assert np.allclose(net.gradient_from_factors(x, head, factors), g, atol=0, rtol=0)
            assert net.factored_norm_sq(x, factors) == pytest.approx(g @ g, rel=1e-12)

    def test_fused_update_skips_on_divergence(self):
        net = init_relu_net(2, 3, 1, InitSpec(seed=0))
        before = net.w.copy()
        delta, _, _ = net.fused_update(np.ones(2), 0, 1e12, 0.1, 1e8)
        assert abs(delta) > 1e8 and np.array_equal(net.w, before)


class TestUpwardRegions:
    def test_single_component_at_init(self):
        t = make_transform("lift_project", MC_BOUNDS, radius=8.0, shift=6.0)
        net = init_relu_net(3, 100, 1, InitSpec(0.5, 0.1, seed=0, upward_dims=t.upward_dims))
        maps = response_maps(net, t, MC_BOUNDS, 100)
        counts = [count_components(m) for m in maps.values()]
        assert all(c == 1 for c in counts if c > 0)
        assert sum(c == 1 for c in counts) >= 50


def test_checkpoint_roundtrip(tmp_path):
    net = init_relu_net(3, 4, 2, InitSpec(seed=5))
    save_checkpoint(tmp_path / "n.npz", net)
    loaded = load_checkpoint(tmp_path / "n.npz")
    assert isinstance(loaded, ReluNet) and loaded.shape == net.shape
    assert np.array_equal(loaded.w, net.w)
    lin = LinearModel(5, 3, w=np.arange(15.0))
    save_checkpoint(tmp_path / "l.npz", lin)
    assert np.array_equal(load_checkpoint(tmp_path / "l.npz").W, lin.W)

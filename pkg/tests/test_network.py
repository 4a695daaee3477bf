import math

import numpy as np
import pytest

from onhkit.network import (
    Network,
    evaluate_loss,
    forward,
    freeze_first,
    get_free_params,
    init_network,
    load_network,
    loss_and_grad,
    save_network,
    set_free_params,
    tiny_cnn_arch,
)

DENSE_NET = ["input:2", "dense:2:2", "softmax"]


def numeric_grad(net, x, y, coords, h=1e-5):
    """Central finite differences over selected free-parameter coordinates."""
    base = get_free_params(net)
    out = np.empty(len(coords))
    for j, i in enumerate(coords):
        v = base.copy()
        v[i] = base[i] + h
        set_free_params(net, v)
        up = evaluate_loss(net, x, y)
        v[i] = base[i] - h
        set_free_params(net, v)
        down = evaluate_loss(net, x, y)
        out[j] = (up - down) / (2.0 * h)
    set_free_params(net, base)
    return out


def grad_errors(net, x, y, max_coords=None, rng=None):
    _, grad = loss_and_grad(net, x, y)
    coords = np.arange(grad.size)
    if max_coords is not None and grad.size > max_coords:
        coords = rng.choice(grad.size, size=max_coords, replace=False)
    fd = numeric_grad(net, x, y, coords)
    bp = grad[coords]
    return np.abs(bp - fd) / np.maximum(1.0, np.maximum(np.abs(bp), np.abs(fd)))


class TestInit:
    def test_deterministic(self):
        a = init_network(DENSE_NET, seed=5)
        b = init_network(DENSE_NET, seed=5)
        assert np.array_equal(get_free_params(a), get_free_params(b))

    def test_biases_zero(self):
        net = init_network(tiny_cnn_arch(), seed=0)
        for layer in net.param_layers:
            assert (layer.b == 0).all()

    def test_weight_bounds(self):
        net = init_network(["input:50", "dense:50:30", "softmax"], seed=1)
        limit = math.sqrt(6.0 / 80.0)
        w = net.param_layers[0].w
        assert np.abs(w).max() <= limit
        assert np.abs(w).max() > 0.5 * limit

    def test_incompatible_shapes_rejected(self):
        with pytest.raises(ValueError):
            Network(["input:4:4:3", "conv:3:8:8", "softmax"])
        with pytest.raises(ValueError):
            Network(["input:10", "dense:9:2", "softmax"])

    def test_must_end_with_softmax(self):
        with pytest.raises(ValueError):
            Network(["input:2", "dense:2:2"])


class TestForward:
    def test_zero_weights_uniform_output(self):
        net = Network(DENSE_NET)
        probs = forward(net, np.random.default_rng(0).normal(size=(6, 2)))
        assert np.allclose(probs, 0.5)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        net = init_network(tiny_cnn_arch(8), seed=3)
        probs = forward(net, rng.random((4, 8, 8, 3)))
        assert probs.shape == (4, 2)
        assert np.abs(probs.sum(axis=1) - 1.0).max() <= 1e-9
        assert (probs > 0).all() and (probs < 1).all()

    def test_hand_computed_softmax(self):
        net = Network(DENSE_NET)
        set_free_params(net, np.array([2.0, -1.0, 0.5, 1.0, 0.1, -0.2]))
        probs = forward(net, np.array([[0.3, -0.4]]))
        z0, z1 = 0.3 * 2.0 - 0.4 * 0.5 + 0.1, 0.3 * -1.0 - 0.4 * 1.0 - 0.2
        want = math.exp(z0) / (math.exp(z0) + math.exp(z1))
        assert probs[0, 0] == pytest.approx(want, abs=1e-12)
        assert probs[0, 1] == pytest.approx(1.0 - want, abs=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        net = init_network(tiny_cnn_arch(8), seed=9)
        x = rng.random((3, 8, 8, 3))
        assert np.array_equal(forward(net, x), forward(net, x))

    def test_shape_mismatch(self):
        net = Network(DENSE_NET)
        with pytest.raises(ValueError):
            forward(net, np.zeros((2, 3)))


class TestLoss:
    def test_confident_correct_near_zero(self):
        net = Network(DENSE_NET)
        set_free_params(net, np.array([40.0, -40.0, 0.0, 0.0, 0.0, 0.0]))
        loss, _ = loss_and_grad(net, np.array([[1.0, 0.0]]), [0])
        assert loss < 1e-6

    def test_uniform_is_ln2(self):
        net = Network(DENSE_NET)
        loss, _ = loss_and_grad(net, np.array([[0.3, 0.7], [1.0, -1.0]]), [0, 1])
        assert loss == pytest.approx(math.log(2.0), abs=1e-9)

    def test_loss_non_negative(self):
        rng = np.random.default_rng(3)
        for seed in range(5):
            net = init_network(["input:3", "dense:3:2", "softmax"], seed=seed)
            loss, _ = loss_and_grad(net, rng.normal(size=(5, 3)), rng.integers(0, 2, 5))
            assert loss >= 0.0

    def test_empty_batch_rejected(self):
        net = Network(DENSE_NET)
        with pytest.raises(ValueError):
            loss_and_grad(net, np.zeros((0, 2)), [])


class TestGradients:
    @pytest.mark.parametrize(
        "arch,shape",
        [
            (["input:5", "dense:5:2", "softmax"], (4, 5)),
            (["input:4", "dense:4:6", "relu", "dense:6:2", "softmax"], (4, 4)),
            (["input:5:5:2", "conv:3:2:3", "flatten", "dense:75:2", "softmax"], (2, 5, 5, 2)),
            (
                ["input:6:6:2", "conv:3:2:2", "maxpool2", "flatten", "dense:18:2", "softmax"],
                (2, 6, 6, 2),
            ),
        ],
    )
    def test_layer_types_match_finite_differences(self, arch, shape):
        rng = np.random.default_rng(7)
        for seed in range(5):
            net = init_network(arch, seed=seed)
            x = rng.normal(size=shape)
            y = rng.integers(0, 2, shape[0])
            assert grad_errors(net, x, y).max() <= 1e-5

    def test_tiny_cnn_subsampled_coords(self):
        rng = np.random.default_rng(8)
        net = init_network(tiny_cnn_arch(8), seed=1)
        x = rng.random((2, 8, 8, 3))
        y = np.array([0, 1])
        assert grad_errors(net, x, y, max_coords=60, rng=rng).max() <= 1e-5

    def test_frozen_layers_excluded_from_grad(self):
        net = init_network(["input:4", "dense:4:3", "relu", "dense:3:2", "softmax"], seed=2)
        freeze_first(net, 1)
        _, grad = loss_and_grad(net, np.ones((2, 4)), [0, 1])
        assert grad.size == 3 * 2 + 2


class TestFreeParams:
    def test_round_trip_fixpoint(self):
        net = init_network(tiny_cnn_arch(8), seed=4)
        v = get_free_params(net)
        set_free_params(net, v)
        assert np.array_equal(get_free_params(net), v)

    def test_freeze_all_empty_vector(self):
        net = init_network(DENSE_NET, seed=0)
        freeze_first(net, len(net.param_layers))
        assert net.n_free == 0
        assert get_free_params(net).size == 0
        set_free_params(net, np.zeros(0))

    def test_set_changes_output_iff_vector_differs(self):
        rng = np.random.default_rng(5)
        net = init_network(DENSE_NET, seed=1)
        x = rng.normal(size=(3, 2))
        v = get_free_params(net)
        base = forward(net, x)
        set_free_params(net, v)
        assert np.array_equal(forward(net, x), base)
        v2 = v.copy()
        v2[0] += 0.5
        set_free_params(net, v2)
        assert not np.array_equal(forward(net, x), base)

    def test_frozen_tensors_untouched_by_set(self):
        net = init_network(["input:4", "dense:4:3", "relu", "dense:3:2", "softmax"], seed=3)
        freeze_first(net, 1)
        frozen_before = net.param_layers[0].w.copy()
        set_free_params(net, np.zeros(net.n_free))
        assert np.array_equal(net.param_layers[0].w, frozen_before)

    def test_length_mismatch(self):
        net = init_network(DENSE_NET, seed=0)
        with pytest.raises(ValueError):
            set_free_params(net, np.zeros(net.n_free + 1))

    def test_freeze_out_of_range(self):
        net = init_network(DENSE_NET, seed=0)
        with pytest.raises(ValueError):
            freeze_first(net, 5)


class TestCheckpoint:
    def test_save_load_identity(self, tmp_path):
        net = init_network(tiny_cnn_arch(8), seed=6)
        freeze_first(net, 1)
        path = tmp_path / "model.onhk"
        save_network(net, path)
        loaded = load_network(path)
        assert loaded.arch == net.arch
        assert loaded.freeze_mask == net.freeze_mask
        for a, b in zip(net.param_layers, loaded.param_layers):
            assert np.array_equal(a.w, b.w)
            assert np.array_equal(a.b, b.b)
        save_network(loaded, tmp_path / "again.onhk")
        assert (tmp_path / "again.onhk").read_bytes() == path.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.onhk"
        path.write_bytes(b"NOPE" + bytes(32))
        with pytest.raises(ValueError, match="magic"):
            load_network(path)

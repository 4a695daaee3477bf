import numpy as np
import pytest

from onhkit.climbers import (
    ArrayDataset,
    Climber,
    ClimberConfig,
    MODE_DETECTION,
    MODE_MOVEMENT,
    MODE_SGDM,
    history_to_csv,
    preset_config,
    random_detection_step,
    random_movement_step,
    run_epoch,
    sgdm_step,
    train,
)
from onhkit.network import get_free_params, init_network

LOGISTIC_ARCH = ["input:2", "dense:2:2", "softmax"]


def make_climber(mode, params, seed=0, **kw):
    c = Climber(mode=mode, params=np.asarray(params, dtype=float), rng=np.random.default_rng(seed), **kw)
    if mode == MODE_SGDM and c.velocity is None:
        c.velocity = np.zeros_like(c.params)
    if mode == MODE_DETECTION and c.detectors is None:
        d = c.rng.standard_normal((8, c.params.size))
        c.detectors = d / np.linalg.norm(d, axis=1, keepdims=True)
    return c


def counting(fn):
    calls = []

    def wrapped(v):
        calls.append(np.array(v, copy=True))
        return fn(v)

    wrapped.calls = calls
    return wrapped


def blobs(n, seed):
    rng = np.random.default_rng(seed)
    half = n // 2
    x = np.concatenate(
        [
            rng.normal(-1.5, 0.4, size=(half, 2)),
            rng.normal(1.5, 0.4, size=(n - half, 2)),
        ]
    )
    y = np.concatenate([np.zeros(half, int), np.ones(n - half, int)])
    return ArrayDataset(x, y)


class TestSgdmStep:
    def test_momentum_off_is_plain_sgd(self):
        c = make_climber(MODE_SGDM, [1.0, 2.0])
        sgdm_step(c, np.array([0.5, -0.5]), lr=0.1, mu=0.0)
        assert np.allclose(c.params, [0.95, 2.05])

    def test_zero_grad_coasts_on_velocity(self):
        c = make_climber(MODE_SGDM, [0.0, 0.0])
        c.velocity = np.array([1.0, -2.0])
        sgdm_step(c, np.zeros(2), lr=0.1, mu=0.9)
        assert np.allclose(c.velocity, [0.9, -1.8])
        assert np.allclose(c.params, [0.9, -1.8])

    def test_quadratic_converges(self):
        # f(w) = w^2, grad 2w; compare against an independent scalar recurrence
        c = make_climber(MODE_SGDM, [1.0])
        w, v = 1.0, 0.0
        for _ in range(200):
            sgdm_step(c, 2.0 * c.params, lr=0.1, mu=0.9)
            v = 0.9 * v - 0.1 * (2.0 * w)
            w = w + v
        assert abs(c.params[0]) < 1e-3
        assert c.params[0] == pytest.approx(w, abs=1e-12)

    def test_non_finite_grad_skipped(self):
        c = make_climber(MODE_SGDM, [1.0])
        before = c.params.copy()
        sgdm_step(c, np.array([np.nan]), lr=0.1, mu=0.9)
        assert np.array_equal(c.params, before)
        assert c.skipped_steps == 1

    def test_wrong_mode_rejected(self):
        c = make_climber(MODE_MOVEMENT, [1.0])
        with pytest.raises(ValueError):
            sgdm_step(c, np.zeros(1), 0.1, 0.9)


class TestRandomMovementStep:
    def test_constant_loss_always_accepts(self):
        c = make_climber(MODE_MOVEMENT, [1.0, 1.0], seed=3)
        start = c.params.copy()
        for _ in range(5):
            random_movement_step(c, lambda v: 1.0)
            assert c.last_accepted
        assert not np.array_equal(c.params, start)

    def test_worse_proposal_reverted(self):
        c = make_climber(MODE_MOVEMENT, [1.0, 1.0], seed=4)
        start = c.params.copy()
        base = float(start @ start)

        def loss(v):
            v = np.asarray(v)
            return base if np.array_equal(v, start) else base + 1.0

        random_movement_step(c, loss)
        assert not c.last_accepted
        assert np.array_equal(c.params, start)

    def test_convex_scalar_descends(self):
        c = make_climber(MODE_MOVEMENT, [5.0], seed=5)
        losses = []
        for _ in range(500):
            random_movement_step(c, lambda v: float(v[0] ** 2))
            losses.append(float(c.params[0] ** 2))
        assert (np.diff(losses) <= 1e-12).all()
        assert losses[-1] < 0.5

    def test_non_finite_proposal_rejected(self):
        c = make_climber(MODE_MOVEMENT, [1.0], seed=6)
        start = c.params.copy()
        random_movement_step(c, lambda v: 0.0 if np.array_equal(v, start) else np.nan)
        assert np.array_equal(c.params, start)


class TestRandomDetectionStep:
    def test_chosen_detector_descends_linear_loss(self):
        g = np.array([1.0, -2.0, 0.5])
        c = make_climber(MODE_DETECTION, [1.0, 1.0, 1.0], seed=7, probe_step=0.5)
        random_detection_step(c, lambda v: float(g @ v))
        if c.last_accepted and c.last_move is not None:
            assert g @ c.last_move < 0

    def test_successful_repeat_skips_detectors(self):
        c = make_climber(MODE_DETECTION, [4.0, 4.0], seed=8)
        c.last_move = np.array([-0.5, -0.5])
        loss = counting(lambda v: float(np.sum(v)))
        random_detection_step(c, loss)
        assert c.last_detector_evals == 0
        assert len(loss.calls) == 2  # base + repeat, nothing else
        assert np.allclose(c.params, [3.5, 3.5])
        assert np.allclose(c.last_move, [-0.5, -0.5])

    def test_stops_at_first_winning_detector(self):
        # every direction improves this loss, so exactly one probe happens
        c = make_climber(MODE_DETECTION, [1.0, 1.0], seed=9, probe_step=0.5)
        center = c.params.copy()
        loss = counting(lambda v: -float(np.sum((np.asarray(v) - center) ** 2)))
        random_detection_step(c, loss)
        assert c.last_detector_evals == 1
        assert len(loss.calls) == 2  # base + one probe
        assert c.last_accepted

    def test_all_fail_halves_probe_and_falls_back(self):
        c = make_climber(MODE_DETECTION, [1.0, 1.0], seed=10, probe_step=0.25)
        center = c.params.copy()
        # bowl: every move away from the current point is worse
        loss = counting(lambda v: float(np.sum((np.asarray(v) - center) ** 2)))
        random_detection_step(c, loss)
        assert c.last_detector_evals == 8
        assert c.probe_step == 0.125
        # base + 8 probes + fallback movement (base + proposal)
        assert len(loss.calls) == 11
        assert not c.last_accepted and c.last_move is None

    def test_accepted_fallback_recorded_as_last_move(self):
        c = make_climber(MODE_DETECTION, [1.0, 1.0], seed=11, probe_step=0.25, epsilon=10.0)
        before = c.params.copy()
        random_detection_step(c, lambda v: 0.0)  # flat: probes never beat epsilon
        assert c.last_accepted
        assert np.allclose(c.last_move, c.params - before)

    def test_bowl_converges_most_seeds(self):
        wins = 0
        for seed in range(10):
            c = make_climber(MODE_DETECTION, [3.0, -2.0], seed=seed, probe_step=0.05)
            initial = float(np.sum(c.params**2))
            for _ in range(300):
                random_detection_step(c, lambda v: float(np.sum(np.asarray(v) ** 2)))
            if float(np.sum(c.params**2)) < 0.01 * initial:
                wins += 1
        assert wins >= 9


class TestRunEpoch:
    def test_single_sgdm_population(self):
        data = blobs(60, seed=0)
        net = init_network(LOGISTIC_ARCH, seed=0)
        pop = [make_climber(MODE_SGDM, get_free_params(net))]
        cfg = ClimberConfig(population=1, batch_size=16, iters_per_epoch=3, learning_rate=0.3)
        survivor, report = run_epoch(
            pop, data, np.arange(48), np.arange(48, 60), cfg, net, np.random.default_rng(0)
        )
        assert survivor is pop[0]
        assert report.survivor_id == 0 and report.survivor_mode == MODE_SGDM

    def test_planted_perfect_climber_survives(self):
        data = blobs(60, seed=1)
        net = init_network(LOGISTIC_ARCH, seed=1)
        # weights that classify the blobs perfectly
        perfect = np.array([-5.0, 5.0, -5.0, 5.0, 0.0, 0.0])
        sgdm = make_climber(MODE_SGDM, np.zeros(6))
        planted = make_climber(MODE_MOVEMENT, perfect, seed=2)
        cfg = ClimberConfig(population=2, batch_size=16, iters_per_epoch=1, learning_rate=1e-6)
        survivor, report = run_epoch(
            [sgdm, planted], data, np.arange(48), np.arange(48, 60), cfg, net,
            np.random.default_rng(1),
        )
        assert report.survivor_id == 1
        assert report.climbers[1].val_accuracy == 1.0

    def test_requires_exactly_one_sgdm(self):
        data = blobs(20, seed=2)
        net = init_network(LOGISTIC_ARCH, seed=0)
        pop = [make_climber(MODE_MOVEMENT, get_free_params(net))]
        cfg = ClimberConfig(population=1)
        with pytest.raises(ValueError, match="sgdm"):
            run_epoch(pop, data, np.arange(16), np.arange(16, 20), cfg, net, np.random.default_rng(0))


class TestTrain:
    def test_presets_match_published_settings(self):
        g = preset_config("googlenet-like")
        assert (g.learning_rate, g.max_epochs, g.iters_per_epoch) == (1e-3, 60, 6)
        n = preset_config("nasnet-like")
        assert (n.learning_rate, n.max_epochs, n.iters_per_epoch) == (1e-3, 20, 22)
        v = preset_config("vgg19-like", batch_size=32)
        assert (v.learning_rate, v.max_epochs, v.batch_size) == (1e-4, 30, 32)
        with pytest.raises(ValueError):
            preset_config("resnet-like")

    def test_sgdm_only_learns_blobs(self):
        data = blobs(200, seed=3)
        for seed in (0, 1, 2):
            net = init_network(LOGISTIC_ARCH, seed=seed)
            cfg = ClimberConfig(
                population=1, learning_rate=0.3, batch_size=32, iters_per_epoch=4,
                max_epochs=30, patience=None, seed=seed,
            )
            _, history = train(net, data, cfg)
            assert history[-1].best_accuracy >= 0.95

    def test_patience_none_runs_max_epochs(self):
        data = blobs(40, seed=4)
        net = init_network(LOGISTIC_ARCH, seed=0)
        cfg = ClimberConfig(population=2, max_epochs=5, patience=None, batch_size=8,
                            iters_per_epoch=2, seed=1)
        _, history = train(net, data, cfg)
        assert len(history) == 5
        assert history[-1].stop_reason == "max_epochs"

    def test_patience_stops_early(self):
        data = blobs(40, seed=5)
        net = init_network(LOGISTIC_ARCH, seed=0)
        # lr 0 equivalent: tiny lr so accuracy never improves after epoch 1
        cfg = ClimberConfig(population=1, learning_rate=1e-12, max_epochs=50,
                            patience=2, batch_size=8, iters_per_epoch=1, seed=2)
        _, history = train(net, data, cfg)
        assert history[-1].stopped
        assert history[-1].stop_reason == "validation_plateau"
        assert len(history) < 50

    def test_exactly_one_sgdm_per_epoch(self):
        data = blobs(60, seed=6)
        net = init_network(LOGISTIC_ARCH, seed=1)
        cfg = ClimberConfig(population=5, max_epochs=4, patience=None, batch_size=16,
                            iters_per_epoch=2, seed=3)
        _, history = train(net, data, cfg)
        for rep in history:
            modes = [c.mode for c in rep.climbers]
            assert modes.count(MODE_SGDM) == 1
            assert all(m in (MODE_SGDM, MODE_MOVEMENT, MODE_DETECTION) for m in modes)

    def test_best_accuracy_monotone(self):
        data = blobs(80, seed=7)
        net = init_network(LOGISTIC_ARCH, seed=2)
        cfg = ClimberConfig(population=3, learning_rate=0.2, max_epochs=10, patience=None,
                            batch_size=16, iters_per_epoch=3, seed=4)
        _, history = train(net, data, cfg)
        best = [rep.best_accuracy for rep in history]
        assert (np.diff(best) >= 0).all()

    def test_deterministic(self):
        data = blobs(60, seed=8)
        cfg = ClimberConfig(population=4, learning_rate=0.2, max_epochs=4, patience=None,
                            batch_size=16, iters_per_epoch=2, seed=5)
        net_a = init_network(LOGISTIC_ARCH, seed=3)
        _, hist_a = train(net_a, data, cfg)
        net_b = init_network(LOGISTIC_ARCH, seed=3)
        _, hist_b = train(net_b, data, cfg)
        assert np.array_equal(get_free_params(net_a), get_free_params(net_b))
        assert history_to_csv(hist_a) == history_to_csv(hist_b)

    def test_frozen_layers_bit_identical_after_train(self):
        data = blobs(60, seed=9)
        arch = ["input:2", "dense:2:4", "relu", "dense:4:2", "softmax"]
        net = init_network(arch, seed=4)
        from onhkit.network import freeze_first

        freeze_first(net, 1)
        frozen_w = net.param_layers[0].w.copy()
        frozen_b = net.param_layers[0].b.copy()
        cfg = ClimberConfig(population=5, learning_rate=0.2, max_epochs=6, patience=None,
                            batch_size=16, iters_per_epoch=3, seed=6)
        _, history = train(net, data, cfg)
        modes = {c.mode for rep in history for c in rep.climbers}
        assert modes == {MODE_SGDM, MODE_MOVEMENT, MODE_DETECTION}
        assert np.array_equal(net.param_layers[0].w, frozen_w)
        assert np.array_equal(net.param_layers[0].b, frozen_b)
        assert not np.array_equal(net.param_layers[1].w, np.zeros((4, 2)))

    def test_single_class_rejected(self):
        data = ArrayDataset(np.zeros((10, 2)), np.zeros(10, int))
        net = init_network(LOGISTIC_ARCH, seed=0)
        with pytest.raises(ValueError, match="both classes"):
            train(net, data, ClimberConfig())

    def test_history_csv_shape(self):
        data = blobs(40, seed=10)
        net = init_network(LOGISTIC_ARCH, seed=5)
        cfg = ClimberConfig(population=2, max_epochs=3, patience=None, batch_size=8,
                            iters_per_epoch=1, seed=7)
        _, history = train(net, data, cfg)
        text = history_to_csv(history)
        lines = text.strip().split("\n")
        assert lines[0] == "epoch,climber_id,mode,val_accuracy,val_loss,survivor_flag"
        assert lines[-1] == "# stopped: max_epochs"
        assert len(lines) == 1 + 3 * 2 + 1
        assert sum(line.endswith(",1") for line in lines[1:-1]) == 3

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensegen.discriminator import DiscriminatorConfig, DiscriminatorModel, accuracy
from sensegen.errors import ConfigError, ContractError
from sensegen.generator import GeneratorConfig, GeneratorModel, forward, sequence_nll
from sensegen.ndmath import Tensor
from sensegen.nn import zeros_dense, zeros_lstm
from sensegen.rng import stream
from sensegen.training import (
    BaselineModel,
    OptimizerState,
    TrainConfig,
    alternating_loop,
    relative_decrease,
    rmse_baseline_loss,
    rmsprop_step,
    sample_windows,
    train_discriminator,
    train_generator,
)

SMALL_G = GeneratorConfig(lstm_layers=1, lstm_units=8, fc_units=6, mixtures=1, final_activation="linear")
SMALL_D = DiscriminatorConfig(lstm_units=6, fc_units=4, window_len=20)


def snapshot(model):
    return {k: t.values.copy() for k, t in model.parameters().items()}


def same(a, b):
    return a.keys() == b.keys() and all(a[k].tobytes() == b[k].tobytes() for k in a)


def test_default_config():
    cfg = TrainConfig()
    assert (cfg.minibatch_size, cfg.d_epochs, cfg.g_epochs, cfg.outer_rounds) == (32, 200, 100, 10)
    assert (cfg.tbptt_window, cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_eps, cfg.clip_norm) == (
        100,
        1e-3,
        0.9,
        1e-6,
        5.0,
    )
    assert cfg.minibatches_per_round == 8


@pytest.mark.parametrize(
    "kw", [{"minibatch_size": 0}, {"rmsprop_decay": 1.0}, {"rmsprop_decay": 0.0}, {"learning_rate": -1.0}, {"g_epochs": 0}]
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


# -- rmsprop ----------------------------------------------------------------


def test_rmsprop_closed_form_single_step():
    p = {"w": Tensor([1.0])}
    state = OptimizerState()
    rmsprop_step(p, {"w": np.array([2.0])}, state, TrainConfig(learning_rate=0.1))
    assert state.cache["w"][0] == pytest.approx(0.4, abs=1e-15)
    delta = p["w"].values[0] - 1.0
    assert delta == pytest.approx(-0.1 * 2 / (math.sqrt(0.4) + 1e-6), abs=1e-12)
    assert delta == pytest.approx(-0.316227, abs=1e-6)
    assert state.step == 1


def test_rmsprop_zero_gradient():
    p = {"w": Tensor([1.0, -2.0])}
    state = OptimizerState({"w": np.array([0.5, 2.0])})
    rmsprop_step(p, {"w": np.zeros(2)}, state, TrainConfig())
    np.testing.assert_array_equal(p["w"].values, [1.0, -2.0])
    np.testing.assert_allclose(state.cache["w"], [0.45, 1.8], atol=1e-15)


def test_rmsprop_repeated_gradient_shrinks_step():
    p = {"w": Tensor([0.0])}
    state = OptimizerState()
    cfg = TrainConfig(learning_rate=0.1)
    rmsprop_step(p, {"w": np.array([2.0])}, state, cfg)
    d1 = p["w"].values[0]
    rmsprop_step(p, {"w": np.array([2.0])}, state, cfg)
    d2 = p["w"].values[0] - d1
    assert abs(d2) < abs(d1)


def test_rmsprop_shape_mismatch():
    with pytest.raises(ContractError):
        rmsprop_step({"w": Tensor([1.0, 2.0])}, {"w": np.zeros(3)}, OptimizerState(), TrainConfig())


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.floats(1e-4, 1.0))
def test_rmsprop_preserves_shape_and_finiteness(seed, lr):
    rng = np.random.default_rng(seed)
    p = {"a": Tensor(rng.standard_normal((2, 3))), "b": Tensor(rng.standard_normal(4))}
    state = OptimizerState()
    for _ in range(3):
        grads = {k: rng.standard_normal(t.shape) * 1e3 for k, t in p.items()}
        rmsprop_step(p, grads, state, TrainConfig(learning_rate=lr))
    assert p["a"].shape == (2, 3) and p["b"].shape == (4,)
    assert all(np.isfinite(t.values).all() for t in p.values())
    assert all((c >= 0).all() for c in state.cache.values())


# -- generator phase --------------------------------------------------------


def test_generator_constant_dataset_learns_constant():
    windows = np.full((8, 21), 0.7)
    g = GeneratorModel.init(SMALL_G, 0)
    cfg = TrainConfig(minibatch_size=4, learning_rate=1e-2)
    _, hist = train_generator(g, windows, cfg, np.random.default_rng(0), epochs=50)
    assert len(hist) == 50
    assert hist[-1] < hist[0] - 1.0
    gm, _ = forward(g, windows[0])
    assert np.abs(gm.mu.values[5:, 0] - 0.7).max() < 0.05


def test_generator_history_is_mean_per_step_nll():
    windows = np.random.default_rng(1).uniform(0, 1, (5, 11))
    g = GeneratorModel.init(SMALL_G, 1)
    expected = sum(sequence_nll(g, w).item() for w in windows) / (5 * 10)
    _, hist = train_generator(g, windows, TrainConfig(minibatch_size=16), np.random.default_rng(0), epochs=1)
    # one minibatch holds every window, so the loss is evaluated before the single update
    assert hist[0] == pytest.approx(expected, abs=1e-12)


def test_generator_zero_learning_rate():
    g = GeneratorModel.init(SMALL_G, 2)
    before = snapshot(g)
    windows = np.random.default_rng(2).uniform(0, 1, (6, 9))
    _, hist = train_generator(g, windows, TrainConfig(learning_rate=0.0, minibatch_size=4), epochs=3)
    assert same(before, snapshot(g))
    assert hist[0] == pytest.approx(hist[1], abs=1e-12) and hist[1] == pytest.approx(hist[2], abs=1e-12)


def test_generator_default_epochs_honored():
    g = GeneratorModel.init(SMALL_G, 3)
    cfg = TrainConfig(g_epochs=4)
    _, hist = train_generator(g, np.zeros((2, 3)), cfg)
    assert len(hist) == 4


def test_generator_empty_dataset():
    with pytest.raises(ConfigError):
        train_generator(GeneratorModel.init(SMALL_G, 0), np.zeros((0, 5)), TrainConfig(), epochs=1)


# -- discriminator phase ----------------------------------------------------


def test_discriminator_separates_sine_from_noise():
    rng = np.random.default_rng(0)
    t = np.arange(20)
    phases = rng.uniform(0, 2 * np.pi, 64)
    real = 0.5 + 0.5 * np.sin(2 * np.pi * t / 10 + phases[:, None])
    fake = rng.uniform(0, 1, (64, 20))
    d = DiscriminatorModel.init(SMALL_D, 0)
    cfg = TrainConfig(minibatch_size=16, learning_rate=1e-2)
    _, hist = train_discriminator(d, real, fake, cfg, np.random.default_rng(1), epochs=200)
    assert len(hist) == 200
    assert max(hist) >= 0.95
    assert hist[-1] >= 0.95


def test_discriminator_zero_learning_rate_keeps_baseline():
    rng = np.random.default_rng(3)
    real, fake = rng.uniform(0, 1, (8, 20)), rng.uniform(0, 1, (8, 20))
    d = DiscriminatorModel.zeros(SMALL_D)
    _, hist = train_discriminator(d, real, fake, TrainConfig(learning_rate=0.0, minibatch_size=4), epochs=3)
    assert hist == [0.5, 0.5, 0.5]
    assert accuracy(d, real, fake) == 0.5


def test_discriminator_empty_source():
    d = DiscriminatorModel.zeros(SMALL_D)
    with pytest.raises(ConfigError):
        train_discriminator(d, np.zeros((0, 20)), np.zeros((4, 20)), TrainConfig(), epochs=1)


# -- alternating schedule ---------------------------------------------------


def _loop(seed=0, rounds=1):
    series = [np.random.default_rng(7).uniform(0, 1, 200)]
    g = GeneratorModel.init(SMALL_G, 10)
    d = DiscriminatorModel.init(SMALL_D, 11)
    cfg = TrainConfig(
        outer_rounds=rounds, d_epochs=2, g_epochs=2, minibatch_size=4, minibatches_per_round=2, tbptt_window=10, seed=seed
    )
    return g, d, series, cfg


def test_single_round_loop():
    g, d, series, cfg = _loop()
    seen = []
    _, _, metrics = alternating_loop(g, d, series, cfg, on_round=lambda m, *_: seen.append(m))
    assert len(metrics) == 1 and seen == metrics
    assert metrics[0].round == 1
    assert 0.0 <= metrics[0].d_accuracy <= 1.0 and math.isfinite(metrics[0].g_nll)


def test_loop_is_deterministic():
    runs = []
    for _ in range(2):
        g, d, series, cfg = _loop(rounds=2)
        _, _, metrics = alternating_loop(g, d, series, cfg)
        runs.append((metrics, snapshot(g), snapshot(d)))
    assert runs[0][0] == runs[1][0]
    assert same(runs[0][1], runs[1][1]) and same(runs[0][2], runs[1][2])


def test_phases_touch_only_their_own_model():
    g, d, series, cfg = _loop()
    g0 = snapshot(g)
    real = sample_windows(series, 20, 8, np.random.default_rng(0))
    train_discriminator(d, real, real[::-1] * 0.5, cfg, epochs=1)
    assert same(g0, snapshot(g))
    d0 = snapshot(d)
    train_generator(g, sample_windows(series, 11, 8, np.random.default_rng(1)), cfg, epochs=1)
    assert same(d0, snapshot(d))
    assert not same(g0, snapshot(g))


def test_sample_windows_are_contiguous_slices():
    s = np.arange(50.0)
    w = sample_windows([s, np.arange(3.0)], 10, 30, np.random.default_rng(0))
    assert w.shape == (30, 10)
    np.testing.assert_array_equal(np.diff(w, axis=1), 1.0)
    with pytest.raises(ConfigError):
        sample_windows([np.arange(5.0)], 10, 1, np.random.default_rng(0))


# -- deterministic baseline -------------------------------------------------


class _Echo:
    """Predicts the next value perfectly for a known sequence."""

    def __init__(self, seq):
        self.seq = np.asarray(seq, dtype=np.float64)

    def predict(self, xs):
        n = np.atleast_2d(xs).shape[1]
        return Tensor(self.seq[None, 1 : n + 1])


def test_baseline_loss_perfect_predictor():
    seq = [0.1, 0.4, -0.3, 0.8]
    assert rmse_baseline_loss(_Echo(seq), seq).item() == 0.0


def test_baseline_loss_zero_model_on_ones():
    m = BaselineModel([zeros_lstm(1, 3)], zeros_dense(3, 2, "sigmoid"), zeros_dense(2, 1, "linear"))
    assert rmse_baseline_loss(m, [1.0, 1.0, 1.0]).item() == 2.0


def test_baseline_loss_short_window():
    m = BaselineModel.init(1, 3, 2, 0)
    with pytest.raises(ContractError):
        rmse_baseline_loss(m, [1.0])


def test_relative_decrease():
    assert relative_decrease(2.0, 1.0) == 0.5
    assert relative_decrease(-1.0, -2.0) == 1.0


def test_reset_discriminator_reinitializes_each_round():
    g, d, series, cfg = _loop(seed=2, rounds=2)
    cfg = replace(cfg, reset_discriminator=True, learning_rate=0.0)
    alternating_loop(g, d, series, cfg)
    fresh = DiscriminatorModel.init(d.config, stream(2, "init-d-2"))
    assert same(snapshot(d), snapshot(fresh))

    g, d, series, cfg = _loop(seed=2, rounds=2)
    d0 = snapshot(d)
    alternating_loop(g, d, series, replace(cfg, learning_rate=0.0))
    assert same(snapshot(d), d0)

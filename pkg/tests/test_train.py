"""Training checks: loss math, analytic gradients against central
differences, pooling gradient routing, determinism, divergence, and the
synthetic dataset."""

import numpy as np
import numpy.testing as npt
import pytest

from kwslite import (
    ArchSpec,
    Context,
    Dense,
    Flatten,
    LabeledExample,
    SoftmaxOut,
    TrainConfig,
    Waveform,
    build_cnn_one,
    build_cnn_trad,
    build_dnn_baseline,
    cross_entropy,
    evaluate,
    grad_check,
    init_weights,
    loss_and_grads,
    log_mel_frames,
    make_synthetic_dataset,
    train,
)
from kwslite.data import (
    FILLER_NAME,
    SyntheticSpec,
    center_window_examples,
    load_dataset_dir,
)
from kwslite.errors import DivergenceError, KwsError
from kwslite.tensor import Pool
from kwslite.train import _maxpool_argmax, _maxpool_scatter
from kwslite.audio import write_wav

from conftest import random_window


# --- cross entropy ----------------------------------------------------------


def test_cross_entropy_hand_values():
    assert cross_entropy(np.array([0.5, 0.5]), 0) == pytest.approx(np.log(2.0))
    assert cross_entropy(np.array([1.0, 0.0]), 0) == 0.0
    assert cross_entropy(np.array([0.25] * 4), 2) == pytest.approx(np.log(4.0))


def test_cross_entropy_clamps_zero_probability():
    loss = cross_entropy(np.array([0.0, 1.0]), 0)
    assert np.isfinite(loss)
    assert loss == pytest.approx(-np.log(1e-12))


def test_cross_entropy_validates_inputs():
    with pytest.raises(ValueError):
        cross_entropy(np.array([0.5, 0.5]), 2)
    with pytest.raises(ValueError):
        cross_entropy(np.array([0.9, 0.9]), 0)


# --- gradients --------------------------------------------------------------


def test_grad_check_dnn_and_cnn_one(rng):
    for build in (build_dnn_baseline, build_cnn_one):
        arch = build(4)
        example = LabeledExample(random_window(rng, arch), 1)
        err = grad_check(arch, example, samples_per_tensor=40, seed=5)
        assert err < 1e-4, (arch.name, err)


def test_grad_check_pooled_arch(rng):
    arch = build_cnn_trad(4)
    example = LabeledExample(random_window(rng, arch), 2)
    err = grad_check(arch, example, samples_per_tensor=25, seed=5)
    assert err < 1e-4, err


def test_zero_input_dense_only_gradients():
    arch = ArchSpec("toy", Context(1, 1), (Flatten(), Dense(8), SoftmaxOut(3)))
    weights = init_weights(arch, 3)
    example = LabeledExample(np.zeros((3, 40), dtype=np.float32), 1)
    grads, loss, _ = loss_and_grads(arch, weights, [example])
    # zero input: weight gradients of the first dense layer vanish,
    # bias gradients do not
    npt.assert_array_equal(grads["dense1.weights"], 0.0)
    assert np.any(grads["dense1.bias"] != 0.0)
    assert np.any(grads["softmax.bias"] != 0.0)
    assert np.isfinite(loss)


def test_duplicated_batch_equals_single_example(rng):
    arch = build_cnn_one(4)
    weights = init_weights(arch, 7)
    example = LabeledExample(random_window(rng, arch), 3)
    single, loss1, _ = loss_and_grads(arch, weights, [example])
    quad, loss4, _ = loss_and_grads(arch, weights, [example] * 4)
    assert loss1 == pytest.approx(loss4, rel=1e-12)
    for key in single:
        npt.assert_array_equal(single[key], quad[key])


def test_maxpool_routing_conserves_gradient(rng):
    x = rng.standard_normal((6, 9, 3)).astype(np.float64)
    pool = Pool(2, 3)
    pooled, arg, _ = _maxpool_argmax(x, pool)
    upstream = rng.standard_normal(pooled.shape)
    routed = _maxpool_scatter(upstream, arg, x.shape, pool)
    # every window's gradient lands on exactly one input position
    assert routed.shape == x.shape
    npt.assert_allclose(routed.sum(), upstream.sum(), rtol=1e-12)
    assert np.count_nonzero(routed) <= upstream.size
    # and it lands on the argmax position
    for ti in range(3):
        for fi in range(3):
            for c in range(3):
                window = x[2 * ti : 2 * ti + 2, 3 * fi : 3 * fi + 3, c]
                routed_win = routed[2 * ti : 2 * ti + 2, 3 * fi : 3 * fi + 3, c]
                flat = np.argmax(window)
                assert routed_win.reshape(-1)[flat] == upstream[ti, fi, c]


def test_maxpool_ties_break_to_earliest():
    x = np.zeros((2, 2, 1), dtype=np.float64)  # all equal: earliest wins
    pooled, arg, _ = _maxpool_argmax(x, Pool(2, 2))
    assert arg[0, 0, 0] == 0


# --- training loop ----------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_corpus():
    ds = make_synthetic_dataset(SyntheticSpec(keywords=2, examples_per_class=6, seed=3))
    arch = build_cnn_one(len(ds.labels))
    return arch, center_window_examples(ds.train, arch.context)


def test_zero_learning_rate_keeps_init(tiny_corpus):
    arch, examples = tiny_corpus
    cfg = TrainConfig(learning_rate=0.0, epochs=2, seed=11)
    result = train(arch, examples, cfg)
    init = init_weights(arch, 11)
    for key in init:
        npt.assert_array_equal(result.weights[key], init[key])


def test_training_deterministic(tiny_corpus):
    arch, examples = tiny_corpus
    cfg = TrainConfig(learning_rate=0.05, epochs=4, seed=2)
    a = train(arch, examples, cfg)
    b = train(arch, examples, cfg)
    assert [s.loss for s in a.history] == [s.loss for s in b.history]
    for key in a.weights:
        npt.assert_array_equal(a.weights[key], b.weights[key])


def test_training_reduces_loss(tiny_corpus):
    arch, examples = tiny_corpus
    result = train(arch, examples, TrainConfig(epochs=15, seed=0))
    assert result.history[-1].loss < result.history[0].loss
    assert len(result.history) == 15


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
def test_divergence_reports_epoch(tiny_corpus):
    arch, examples = tiny_corpus
    with pytest.raises(DivergenceError) as info:
        train(arch, examples, TrainConfig(learning_rate=1e9, epochs=10, seed=0))
    assert info.value.epoch is not None
    assert 1 <= info.value.epoch <= 10


def test_evaluate_matches_history_scale(tiny_corpus):
    arch, examples = tiny_corpus
    result = train(arch, examples, TrainConfig(epochs=20, seed=1))
    loss, acc = evaluate(arch, result.weights, examples)
    assert 0.0 <= acc <= 1.0
    assert loss < np.log(3)  # better than uniform over 3 classes


# --- synthetic dataset ------------------------------------------------------


def test_synthetic_dataset_layout():
    spec = SyntheticSpec(keywords=3, examples_per_class=20, seed=1)
    ds = make_synthetic_dataset(spec)
    assert ds.labels == ["_filler", "kw1", "kw2", "kw3"]
    assert ds.labels == sorted(ds.labels)
    assert ds.filler_index == 0
    assert len(ds.train) == 80
    assert len(ds.test) == 4 * max(2, 20 // 4)
    for samples, label in ds.train + ds.test:
        assert samples.dtype == np.float32
        assert len(samples) == 16000
        assert 0 <= label <= 3
        assert np.all(np.abs(samples) <= 1.0)


def test_synthetic_dataset_deterministic():
    a = make_synthetic_dataset(SyntheticSpec(seed=9))
    b = make_synthetic_dataset(SyntheticSpec(seed=9))
    for (xa, la), (xb, lb) in zip(a.train, b.train):
        npt.assert_array_equal(xa, xb)
        assert la == lb


def test_synthetic_classes_have_distinct_dominant_filters():
    ds = make_synthetic_dataset(SyntheticSpec(keywords=3, examples_per_class=2, seed=4))
    dominant = {}
    for label in range(1, 4):
        samples = next(x for x, l in ds.train if l == label)
        frames = log_mel_frames(Waveform(samples))
        dominant[label] = int(np.argmax(frames.mean(axis=0)))
    assert len(set(dominant.values())) == 3


def test_first_epoch_loss_near_uniform(tiny_corpus):
    arch, examples = tiny_corpus
    result = train(arch, examples, TrainConfig(epochs=1, seed=6))
    assert result.history[0].loss <= np.log(arch.labels) + 0.1


def test_load_dataset_dir(tmp_path):
    rng = np.random.default_rng(0)
    for cls in (FILLER_NAME, "go", "stop"):
        d = tmp_path / cls
        d.mkdir()
        for i in range(2):
            write_wav(d / f"ex{i}.wav", 0.1 * rng.standard_normal(16000))
    ds = load_dataset_dir(tmp_path)
    assert ds.labels == [FILLER_NAME, "go", "stop"]
    assert len(ds.train) == 6
    assert ds.filler_index == 0


def test_load_dataset_dir_requires_filler(tmp_path):
    d = tmp_path / "go"
    d.mkdir()
    write_wav(d / "a.wav", np.zeros(16000))
    with pytest.raises(KwsError):
        load_dataset_dir(tmp_path)

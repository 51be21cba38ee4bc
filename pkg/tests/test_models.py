"""Classifier forward/gradient correctness and checkpoint persistence.

The linear color probe has closed-form logits and gradients which are
re-derived inline here; the conv net is checked against central finite
differences (32-bit forward, so tolerances are loose but meaningful).
"""

import numpy as np
import pytest

from advfilter import (
    Checkpoint,
    FilterParams,
    Dataset,
    LinearColorProbe,
    TinyCNN,
    TrainConfig,
    accuracy,
    apply_filter,
    build_model,
    cross_entropy,
    cw_loss,
    filter_param_gradient,
    forward,
    identity_params,
    input_gradient,
    load_checkpoint,
    save_checkpoint,
    train,
)
from advfilter.models import params_digest, softmax_ce_batch

from helpers import central_diff, rel_err


# ---------------------------------------------------------------------------
# linear color probe: closed forms
# ---------------------------------------------------------------------------

def probe_fixture():
    rng = np.random.default_rng(31)
    w = rng.normal(size=(4, 3))
    b = rng.normal(size=4)
    return LinearColorProbe(class_count=4, input_shape=(8, 8), weight=w, bias=b), rng


def test_probe_forward_closed_form():
    probe, rng = probe_fixture()
    img = rng.uniform(size=(8, 8, 3))
    logits = forward(probe, img)
    expected = probe.weight @ img.mean(axis=(0, 1)) + probe.bias
    assert np.abs(logits - expected).max() < 1e-12


def test_probe_input_gradient_closed_form():
    probe, rng = probe_fixture()
    img = rng.uniform(size=(8, 8, 3))
    label = 2
    value, grad = input_gradient(probe, img, lambda z, l: cross_entropy(z, l), label)
    # d mean_c / d pixel = 1/(H*W); chain through dL/dlogits analytically
    _, dlogits = cross_entropy(forward(probe, img), label)
    expected_pixel = (dlogits @ probe.weight) / 64.0
    assert grad.shape == (8, 8, 3)
    assert np.abs(grad - expected_pixel[None, None, :]).max() < 1e-12


def test_probe_input_gradient_matches_finite_differences():
    probe, rng = probe_fixture()
    img = rng.uniform(low=0.2, high=0.8, size=(8, 8, 3))
    value, grad = input_gradient(probe, img, lambda z, l: cw_loss(z, l), 1)
    coords = list(rng.choice(img.size, size=24, replace=False))
    fd = central_diff(lambda x: cw_loss(forward(probe, x), 1)[0], img, h=1e-6,
                      coords=coords)
    mask = ~np.isnan(fd)
    assert rel_err(grad[mask], fd[mask], floor=1e-6).max() < 1e-8


def test_probe_param_gradients():
    probe, rng = probe_fixture()
    batch = rng.uniform(size=(5, 8, 8, 3))
    logits, cache = probe._forward_cache(batch)
    g = rng.normal(size=logits.shape)
    _, grads = probe.backward_batch(cache, g, need_param_grads=True)
    means = batch.mean(axis=(1, 2))
    assert np.abs(grads["weight"] - g.T @ means).max() < 1e-12
    assert np.abs(grads["bias"] - g.sum(axis=0)).max() < 1e-12


# ---------------------------------------------------------------------------
# conv net
# ---------------------------------------------------------------------------

def test_cnn_shapes_and_batch_consistency():
    model = TinyCNN(class_count=10, seed=3)
    rng = np.random.default_rng(32)
    batch = rng.uniform(size=(4, 32, 32, 3)).astype(np.float32)
    logits = model.forward_batch(batch)
    assert logits.shape == (4, 10)
    # identical call is bit-identical; single-image path agrees to float32
    # rounding (BLAS summation order differs across batch shapes)
    assert np.array_equal(model.forward_batch(batch), logits)
    singles = np.stack([forward(model, batch[i]) for i in range(4)])
    assert np.allclose(logits, singles, rtol=1e-5, atol=1e-5)


def test_cnn_input_gradient_exact_in_float64():
    """Backward math against FD with the net run in float64: no staircase
    noise, ReLU kink crossings vanish at h = 1e-5."""
    model = TinyCNN(class_count=10, seed=4, dtype=np.float64)
    rng = np.random.default_rng(33)
    img = rng.uniform(low=0.1, high=0.9, size=(32, 32, 3))
    label = 5

    value, grad = input_gradient(model, img, lambda z, l: cross_entropy(z, l), label)
    coords = list(rng.choice(img.size, size=30, replace=False))
    fd = central_diff(
        lambda x: cross_entropy(forward(model, x), label)[0], img, h=1e-5,
        coords=coords)
    mask = ~np.isnan(fd)
    assert rel_err(grad[mask], fd[mask], floor=1e-4).max() < 1e-6


def test_cnn_input_gradient_float32_working_precision():
    # the deployed precision: FD through a float32 forward is staircase
    # limited, so the tolerance is coarse; exactness is covered by the
    # float64 twin above
    model = TinyCNN(class_count=10, seed=4)
    rng = np.random.default_rng(33)
    img = rng.uniform(low=0.1, high=0.9, size=(32, 32, 3))
    label = 5
    value, grad = input_gradient(model, img, lambda z, l: cross_entropy(z, l), label)
    coords = list(rng.choice(img.size, size=24, replace=False))
    fd = central_diff(
        lambda x: cross_entropy(forward(model, x), label)[0], img, h=1e-3,
        coords=coords)
    mask = ~np.isnan(fd)
    keep = mask & (np.abs(np.where(mask, fd, 0.0)) > 1e-2)
    assert keep.sum() >= 5
    assert rel_err(grad[keep], fd[keep], floor=1e-2).max() < 0.1


def test_cnn_filter_chain_gradient_matches_finite_differences():
    """Full chain: loss(model(filter(x, theta))) differentiated in theta."""
    model = TinyCNN(class_count=10, seed=5)
    rng = np.random.default_rng(34)
    img = rng.uniform(low=0.05, high=0.95, size=(32, 32, 3))
    label = 2
    k = 8
    theta = rng.uniform(0.08, 0.2, size=(3, k))
    params = FilterParams(theta, epsilon=16.0)

    filtered = apply_filter(img, params)
    _, input_grad = input_gradient(model, filtered,
                                   lambda z, l: cross_entropy(z, l), label)
    analytic = filter_param_gradient(img, params, input_grad)

    # FD oracle runs the same weights in float64: kink geometry is identical,
    # but exact arithmetic lets h shrink below the ReLU kink spacing
    twin = TinyCNN(class_count=10, seed=5, dtype=np.float64)
    for name, value in model.params().items():
        getattr(twin, name)[...] = value

    def objective(theta_flat):
        p = FilterParams(theta_flat.reshape(3, k), epsilon=16.0)
        return cross_entropy(forward(twin, apply_filter(img, p)), label)[0]

    coords = list(rng.choice(3 * k, size=12, replace=False))
    fd = central_diff(objective, theta, h=1e-6, coords=coords)
    mask = ~np.isnan(fd)
    keep = mask & (np.abs(np.where(mask, fd, 0.0)) > 1e-2)
    assert keep.sum() >= 6
    assert rel_err(analytic[keep], fd[keep], floor=1e-2).max() < 1e-2


def test_probe_filter_chain_gradient_is_exact():
    """Same chain through the float64 probe: smooth everywhere, so the FD
    oracle pins the decomposition (input gradient -> filter gradient) tight."""
    probe, rng = probe_fixture()
    img = rng.uniform(size=(8, 8, 3))
    label = 3
    k = 6
    theta = rng.uniform(0.1, 0.3, size=(3, k))
    params = FilterParams(theta, epsilon=8.0)

    filtered = apply_filter(img, params)
    _, input_grad = input_gradient(probe, filtered,
                                   lambda z, l: cross_entropy(z, l), label)
    analytic = filter_param_gradient(img, params, input_grad)

    def objective(theta_flat):
        p = FilterParams(theta_flat.reshape(3, k), epsilon=8.0)
        return cross_entropy(forward(probe, apply_filter(img, p)), label)[0]

    fd = central_diff(objective, theta, h=1e-6)
    assert rel_err(analytic, fd, floor=1e-4).max() < 1e-6


def test_cnn_rejects_wrong_input_size():
    model = TinyCNN()
    with pytest.raises(ValueError):
        model.forward_batch(np.zeros((1, 16, 16, 3), dtype=np.float32))
    with pytest.raises(ValueError):
        TinyCNN(input_shape=(30, 30))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def color_blob_dataset(n, seed, split="train"):
    """Three classes of constant-ish color patches: linearly separable."""
    rng = np.random.default_rng(seed)
    base = np.array([[200, 40, 40], [40, 200, 40], [40, 40, 200]], dtype=np.float64)
    labels = rng.integers(0, 3, size=n)
    pixels = base[labels][:, None, None, :] + rng.normal(0, 12, size=(n, 8, 8, 3))
    pixels = np.clip(pixels, 0, 255).astype(np.uint8)
    return Dataset(pixels, labels.astype(np.int64), class_count=3, split_tag=split)


def test_train_probe_learns_and_selects_best_epoch():
    train_set = color_blob_dataset(300, 41)
    val_set = color_blob_dataset(60, 42, split="val")
    model = LinearColorProbe(class_count=3, input_shape=(8, 8))
    cfg = TrainConfig(batch_size=32, epochs=8, learning_rate=0.5,
                      momentum=0.9, weight_decay=1e-4, seed=0)
    ckpt = train(model, train_set, val_set, cfg)
    assert accuracy(model, val_set) > 0.95
    assert ckpt.meta["best_epoch"] >= 0
    assert len(ckpt.meta["history"]) == 8
    assert ckpt.meta["val_accuracy"] == max(h["val_accuracy"] for h in ckpt.meta["history"])
    # restored parameters are exactly the best-epoch snapshot
    assert params_digest(model) == params_digest(ckpt)


def test_train_is_seed_deterministic():
    def run():
        model = LinearColorProbe(class_count=3, input_shape=(8, 8))
        cfg = TrainConfig(batch_size=32, epochs=3, learning_rate=0.5,
                          momentum=0.9, weight_decay=1e-4, seed=7)
        train(model, color_blob_dataset(200, 43), color_blob_dataset(40, 44), cfg)
        return params_digest(model)

    assert run() == run()


def test_softmax_ce_batch_matches_scalar():
    rng = np.random.default_rng(45)
    logits = rng.normal(size=(6, 5))
    labels = rng.integers(0, 5, size=6)
    v, g = softmax_ce_batch(logits, labels)
    ref = np.mean([cross_entropy(logits[i], int(labels[i]))[0] for i in range(6)])
    assert abs(v - ref) < 1e-12
    fd = central_diff(lambda z: softmax_ce_batch(z, labels)[0], logits, h=1e-6)
    assert rel_err(g, fd, floor=1e-5).max() < 1e-6


def test_train_rejects_empty_dataset():
    empty = Dataset(np.zeros((0, 8, 8, 3), dtype=np.uint8),
                    np.zeros(0, dtype=np.int64), class_count=3)
    model = LinearColorProbe(class_count=3, input_shape=(8, 8))
    with pytest.raises(ValueError):
        train(model, empty, empty, TrainConfig(epochs=1))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip_tiny_cnn(tmp_path):
    model = TinyCNN(class_count=10, seed=9)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    ckpt = load_checkpoint(path)
    assert ckpt.arch == "tiny_cnn"
    for name, arr in model.params().items():
        assert np.array_equal(ckpt.params[name], arr)
        assert ckpt.params[name].dtype == arr.dtype

    rebuilt = build_model(ckpt)
    rng = np.random.default_rng(46)
    batch = rng.uniform(size=(2, 32, 32, 3)).astype(np.float32)
    assert np.array_equal(rebuilt.forward_batch(batch), model.forward_batch(batch))


def test_checkpoint_round_trip_probe_with_meta(tmp_path):
    probe, _ = probe_fixture()
    ck = Checkpoint(arch=probe.arch, params=probe.params(),
                    meta={"note": "fixture", "val_accuracy": 0.5},
                    class_count=4, input_shape=[8, 8])
    path = tmp_path / "p.ckpt"
    save_checkpoint(ck, path)
    back = load_checkpoint(path, expect_arch="linear_color_probe")
    assert back.meta["note"] == "fixture"
    assert back.class_count == 4 and back.input_shape == [8, 8]
    assert np.array_equal(back.params["weight"], probe.weight)
    assert back.params["weight"].dtype == np.float64


def test_checkpoint_error_cases(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ValueError):
        load_checkpoint(p)
    p.write_bytes(b"")
    with pytest.raises(ValueError):
        load_checkpoint(p)

    good = tmp_path / "good.ckpt"
    save_checkpoint(TinyCNN(seed=1), good)
    with pytest.raises(ValueError):
        load_checkpoint(good, expect_arch="linear_color_probe")
    # truncated payload
    raw = good.read_bytes()
    p.write_bytes(raw[: len(raw) - 100])
    with pytest.raises(ValueError):
        load_checkpoint(p)

    with pytest.raises(ValueError):
        build_model(Checkpoint(arch="mystery", params={}))


def test_params_digest_distinguishes_models():
    a = TinyCNN(seed=1)
    b = TinyCNN(seed=2)
    assert params_digest(a) == params_digest(a)
    assert params_digest(a) != params_digest(b)


def test_accuracy_on_known_dataset():
    ds = color_blob_dataset(90, 47)
    ideal = LinearColorProbe(class_count=3, input_shape=(8, 8),
                             weight=np.eye(3), bias=np.zeros(3))
    assert accuracy(ideal, ds) > 0.95
    with pytest.raises(ValueError):
        accuracy(ideal, ds.subset(np.arange(0)))

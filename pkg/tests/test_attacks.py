"""Attack loop contracts, checked on a tiny exact-gradient model.

The linear color probe classifies by mean channel intensity, so filter
attacks against it have a closed-form direction (push the mean toward the
rival class) and converge in a handful of steps. That keeps every test here
fast while still exercising the full loop: early exit, gradient chaining,
clipping, quantized success checks, and batch bookkeeping.
"""

import numpy as np
import pytest

from advfilter.attacks import (
    AttackConfig,
    advcf_attack,
    advcf_attack_batch,
    ifgsm_attack,
    ifgsm_attack_batch,
    random_filter_search,
    random_filter_search_batch,
    style_guided_advcf,
    style_guided_advcf_batch,
    style_target_image,
)
from advfilter.filters import apply_filter, preset_params
from advfilter.images import quantize
from advfilter.losses import LossSpec
from advfilter.models import LinearColorProbe, forward


def make_probe(classes=4, side=16, seed=7):
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 1.0, (classes, 3))
    b = rng.normal(0.0, 0.1, classes)
    return LinearColorProbe(class_count=classes, input_shape=(side, side),
                            weight=w, bias=b)


def probe_and_image(seed=7, side=16):
    model = make_probe(side=side, seed=seed)
    rng = np.random.default_rng(seed + 100)
    img = rng.uniform(0.2, 0.8, (side, side, 3))
    label = int(np.argmax(forward(model, img)))
    return model, img, label


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------

def test_attack_config_rejects_bad_values():
    with pytest.raises(ValueError):
        AttackConfig(iterations=0)
    with pytest.raises(ValueError):
        AttackConfig(step_size=0.0)
    with pytest.raises(ValueError):
        AttackConfig(pieces=1)
    with pytest.raises(ValueError):
        AttackConfig(epsilon=0.5)
    with pytest.raises(ValueError):
        AttackConfig(confidence=-1.0)


# ---------------------------------------------------------------------------
# filter attack
# ---------------------------------------------------------------------------

def test_advcf_output_is_exactly_the_filtered_original():
    model, img, label = probe_and_image()
    out = advcf_attack(model, img, label, AttackConfig(iterations=30, pieces=8))
    assert out.success
    recon = apply_filter(img, out.final_params)
    assert np.array_equal(recon, out.adversarial)


def test_advcf_success_is_judged_on_the_quantized_image():
    model, img, label = probe_and_image()
    out = advcf_attack(model, img, label, AttackConfig(iterations=30, pieces=8))
    pred = int(np.argmax(forward(model, quantize(out.adversarial))))
    assert out.success == (pred != label)
    assert out.predicted_label == pred


def test_advcf_misclassified_input_succeeds_at_iteration_zero():
    model, img, label = probe_and_image()
    wrong = (label + 1) % 4
    out = advcf_attack(model, img, wrong, AttackConfig(iterations=30, pieces=8))
    assert out.success
    assert out.first_success_iteration == 0
    # identity filter: the "adversarial" image is the input itself
    assert np.allclose(out.adversarial, img, atol=1e-12)
    assert np.allclose(out.final_params.theta, 1.0 / 8, atol=1e-15)
    assert np.array_equal(out.adversarial, apply_filter(img, out.final_params))


def test_advcf_epsilon_one_pins_the_identity_filter():
    model, img, label = probe_and_image()
    out = advcf_attack(model, img, label,
                       AttackConfig(iterations=10, pieces=8, epsilon=1.0))
    assert np.allclose(out.final_params.theta, 1.0 / 8, atol=1e-15)
    assert np.allclose(out.adversarial, img, atol=1e-12)


def test_advcf_theta_stays_inside_the_weight_box():
    model, img, label = probe_and_image()
    cfg = AttackConfig(iterations=40, pieces=8, epsilon=4.0, step_size=3.0)
    out = advcf_attack(model, img, label, cfg)
    th = out.final_params.theta
    assert th.min() >= 1.0 / 8 - 1e-15
    assert th.max() <= 4.0 / 8 + 1e-15


def test_advcf_iteration_count_bounds_checks():
    model, img, label = probe_and_image()
    cfg = AttackConfig(iterations=5, pieces=8, epsilon=1.0)
    out = advcf_attack(model, img, label, cfg)
    # epsilon=1 never succeeds on a correctly classified image, so the loop
    # runs its full budget: iterations+1 success checks, one loss value each.
    assert not out.success
    assert out.first_success_iteration is None
    assert len(out.loss_trace) == 6


def test_advcf_is_deterministic():
    model, img, label = probe_and_image()
    cfg = AttackConfig(iterations=25, pieces=8)
    a = advcf_attack(model, img, label, cfg)
    b = advcf_attack(model, img, label, cfg)
    assert np.array_equal(a.adversarial, b.adversarial)
    assert a.loss_trace == b.loss_trace
    assert a.first_success_iteration == b.first_success_iteration


def test_advcf_batch_matches_single_image_runs():
    model, _, _ = probe_and_image()
    rng = np.random.default_rng(42)
    imgs = rng.uniform(0.1, 0.9, (5, 16, 16, 3))
    labels = np.array([int(np.argmax(forward(model, im))) for im in imgs])
    cfg = AttackConfig(iterations=20, pieces=8)
    batch = advcf_attack_batch(model, imgs, labels, cfg)
    for i in range(5):
        single = advcf_attack(model, imgs[i], int(labels[i]), cfg)
        assert np.array_equal(batch[i].adversarial, single.adversarial)
        assert batch[i].success == single.success
        assert batch[i].first_success_iteration == single.first_success_iteration
        # forward passes hit different BLAS kernels per batch shape, so trace
        # floats may differ in the last ulp
        assert batch[i].loss_trace == pytest.approx(single.loss_trace, rel=1e-9)


def test_advcf_unquantized_mode_checks_the_raw_candidate():
    model, img, label = probe_and_image()
    cfg = AttackConfig(iterations=30, pieces=8, quantize_output=False)
    out = advcf_attack(model, img, label, cfg)
    pred = int(np.argmax(forward(model, out.adversarial)))
    assert out.success == (pred != label)


# ---------------------------------------------------------------------------
# style-guided variant
# ---------------------------------------------------------------------------

def test_style_target_image_is_the_preset_filtered_input():
    rng = np.random.default_rng(3)
    img = rng.uniform(0.0, 1.0, (8, 8, 3))
    target = style_target_image(img, "warm")
    assert np.array_equal(target, apply_filter(img, preset_params("warm", 16)))


def test_style_guided_with_zero_weight_reproduces_the_plain_attack():
    model, img, label = probe_and_image()
    cfg = AttackConfig(iterations=25, pieces=8,
                       loss=LossSpec(style_weight=0.0))
    target = style_target_image(img, "cool")
    styled = style_guided_advcf(model, img, label, cfg, target)
    plain = advcf_attack(model, img, label, cfg)
    assert np.array_equal(styled.adversarial, plain.adversarial)
    assert styled.first_success_iteration == plain.first_success_iteration


def test_style_guided_pulls_toward_the_styled_target():
    # maximize the confidence demand so the loop never exits early and the
    # style pull acts over the whole budget
    model, img, label = probe_and_image(seed=11)
    target = style_target_image(img, "warm")
    far = AttackConfig(iterations=60, pieces=8, confidence=50.0,
                       loss=LossSpec(style_weight=0.0))
    near = AttackConfig(iterations=60, pieces=8, confidence=50.0,
                        loss=LossSpec(style_weight=10.0))
    out_far = style_guided_advcf(model, img, label, far, target)
    out_near = style_guided_advcf(model, img, label, near, target)
    d_far = float(np.sum((out_far.adversarial - target) ** 2))
    d_near = float(np.sum((out_near.adversarial - target) ** 2))
    assert d_near < d_far


def test_style_guided_rejects_mismatched_target_shape():
    model, img, label = probe_and_image()
    bad = np.zeros((8, 8, 3))
    with pytest.raises(ValueError):
        style_guided_advcf(model, img, label, AttackConfig(iterations=5, pieces=8), bad)


def test_style_guided_batch_matches_single():
    model, _, _ = probe_and_image()
    rng = np.random.default_rng(12)
    imgs = rng.uniform(0.1, 0.9, (3, 16, 16, 3))
    labels = np.array([int(np.argmax(forward(model, im))) for im in imgs])
    targets = np.stack([style_target_image(im, "fade") for im in imgs])
    cfg = AttackConfig(iterations=15, pieces=8)
    batch = style_guided_advcf_batch(model, imgs, labels, cfg, targets)
    for i in range(3):
        single = style_guided_advcf(model, imgs[i], int(labels[i]), cfg, targets[i])
        assert np.array_equal(batch[i].adversarial, single.adversarial)


# ---------------------------------------------------------------------------
# iterative sign-gradient baseline
# ---------------------------------------------------------------------------

def test_ifgsm_respects_the_pixel_ball():
    model, img, label = probe_and_image()
    for bound in (2.0, 8.0, 16.0):
        out = ifgsm_attack(model, img, label, linf_bound=bound, step=2.0,
                           iterations=10)
        assert np.max(np.abs(out.adversarial - img)) <= bound / 255.0 + 1e-9
        assert out.adversarial.min() >= 0.0 and out.adversarial.max() <= 1.0


def test_ifgsm_zero_bound_returns_the_input():
    model, img, label = probe_and_image()
    out = ifgsm_attack(model, img, label, linf_bound=0.0, step=2.0, iterations=5)
    assert np.array_equal(out.adversarial, img)
    assert not out.success


def test_ifgsm_misclassified_input_succeeds_immediately():
    model, img, label = probe_and_image()
    wrong = (label + 2) % 4
    out = ifgsm_attack(model, img, wrong, linf_bound=8.0, step=2.0, iterations=5)
    assert out.success
    assert out.first_success_iteration == 0
    assert np.array_equal(out.adversarial, img)


def test_ifgsm_large_budget_flips_the_probe():
    # the probe is linear, so a large-enough ball always crosses the boundary
    model, img, label = probe_and_image()
    out = ifgsm_attack(model, img, label, linf_bound=128.0, step=16.0,
                       iterations=40)
    assert out.success


def test_ifgsm_rejects_bad_arguments():
    model, img, label = probe_and_image()
    with pytest.raises(ValueError):
        ifgsm_attack(model, img, label, linf_bound=-1.0)
    with pytest.raises(ValueError):
        ifgsm_attack(model, img, label, step=0.0)
    with pytest.raises(ValueError):
        ifgsm_attack(model, img, label, iterations=0)


def test_ifgsm_batch_matches_single():
    model, _, _ = probe_and_image()
    rng = np.random.default_rng(21)
    imgs = rng.uniform(0.1, 0.9, (4, 16, 16, 3))
    labels = np.array([int(np.argmax(forward(model, im))) for im in imgs])
    batch = ifgsm_attack_batch(model, imgs, labels, linf_bound=16.0, step=4.0,
                               iterations=8)
    for i in range(4):
        single = ifgsm_attack(model, imgs[i], int(labels[i]), linf_bound=16.0,
                              step=4.0, iterations=8)
        assert np.array_equal(batch[i].adversarial, single.adversarial)
        assert batch[i].success == single.success


# ---------------------------------------------------------------------------
# random filter search
# ---------------------------------------------------------------------------

def test_random_search_is_reproducible_under_a_seeded_generator():
    model, img, label = probe_and_image()
    a = random_filter_search(model, img, label, pieces=8, trials=30,
                             rng=np.random.default_rng(5))
    b = random_filter_search(model, img, label, pieces=8, trials=30,
                             rng=np.random.default_rng(5))
    assert np.array_equal(a.adversarial, b.adversarial)
    assert a.success == b.success
    assert a.first_success_iteration == b.first_success_iteration


def test_random_search_output_is_the_filtered_original():
    model, img, label = probe_and_image()
    out = random_filter_search(model, img, label, pieces=8, trials=30,
                               rng=np.random.default_rng(5))
    assert np.array_equal(out.adversarial, apply_filter(img, out.final_params))
    th = out.final_params.theta
    assert th.min() >= 1.0 / 8 and th.max() <= 16.0 / 8


def test_random_search_stops_at_the_first_hit():
    model, img, label = probe_and_image()
    out = random_filter_search(model, img, label, pieces=8, epsilon=16.0,
                               trials=500, rng=np.random.default_rng(1))
    if out.success:
        assert out.first_success_iteration == len(out.loss_trace) - 1
    else:
        assert len(out.loss_trace) == 500


def test_random_search_batch_uses_one_stream_per_position():
    model, _, _ = probe_and_image()
    rng = np.random.default_rng(33)
    imgs = rng.uniform(0.1, 0.9, (4, 16, 16, 3))
    labels = np.array([int(np.argmax(forward(model, im))) for im in imgs])
    batch = random_filter_search_batch(model, imgs, labels, pieces=8,
                                       trials=25, seed=9)
    for i in range(4):
        single = random_filter_search(model, imgs[i], int(labels[i]), pieces=8,
                                      trials=25, rng=np.random.default_rng([9, i]))
        assert np.array_equal(batch[i].adversarial, single.adversarial)
        assert batch[i].success == single.success
    # an image's draws depend only on its position, not on when the other
    # images in the batch finish
    part = random_filter_search_batch(model, imgs[1:], labels[1:], pieces=8,
                                      trials=25, seed=9)
    redo = random_filter_search(model, imgs[1], int(labels[1]), pieces=8,
                                trials=25, rng=np.random.default_rng([9, 0]))
    assert np.array_equal(part[0].adversarial, redo.adversarial)


def test_random_search_rejects_zero_trials():
    model, img, label = probe_and_image()
    with pytest.raises(ValueError):
        random_filter_search(model, img, label, trials=0)

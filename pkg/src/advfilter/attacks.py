"""Adversarial attacks: gradient-driven color-filter optimization, an
iterative sign-gradient pixel baseline, random filter search, and the
style-guided filter variant.

Every attack has a per-image entry point returning an AttackOutcome and a
batch entry point used by the evaluation harness and adversarial training.
The batch cores keep one candidate per image, freeze images on their first
success (the returned image is the cheapest transformation found), and only
spend model passes on still-active images.

Success is judged on the 8-bit quantized candidate by default, since a
deployable adversarial image must survive export; quantize_output=False
preserves continuous evaluation. Gradients are always taken at the
unquantized candidate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .filters import FilterParams, apply_filter, preset_params
from .images import quantize
from .losses import LossSpec

__all__ = [
    "AttackConfig",
    "AttackOutcome",
    "IfgsmConfig",
    "advcf_attack",
    "advcf_attack_batch",
    "generate_adversarial_batch",
    "ifgsm_attack",
    "ifgsm_attack_batch",
    "random_filter_search",
    "random_filter_search_batch",
    "style_guided_advcf",
    "style_guided_advcf_batch",
    "style_target_image",
]

GRAD_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class AttackConfig:
    """Knobs of the filter attack loop.

    step_size is the L2-normalized step in parameter space. epsilon bounds
    every filter weight inside [1/K, epsilon/K]; epsilon = 1 pins the filter
    at identity. confidence is the misclassification margin the loss keeps
    pushing for. Defaults are the comparison-experiment setting; adversarial
    training uses (iterations=50, step_size=0.1, epsilon=8).
    """

    iterations: int = 100
    step_size: float = 1.0
    pieces: int = 64
    epsilon: float = 16.0
    confidence: float = 0.0
    loss: LossSpec = field(default_factory=LossSpec)
    quantize_output: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.pieces < 2:
            raise ValueError("pieces must be >= 2")
        if self.epsilon < 1.0:
            raise ValueError("epsilon must be >= 1")
        if self.confidence < 0:
            raise ValueError("confidence must be >= 0")


@dataclass(frozen=True)
class IfgsmConfig:
    """Settings of the iterative sign-gradient pixel attack.

    linf_bound and step are in 0-255 units. The adversarial-training
    setting is (iterations=7, step=2, linf_bound=8).
    """

    linf_bound: float = 8.0
    step: float = 2.0
    iterations: int = 7
    quantize_output: bool = True

    def __post_init__(self):
        if self.linf_bound < 0:
            raise ValueError("linf_bound must be >= 0")
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass
class AttackOutcome:
    adversarial: np.ndarray
    success: bool
    first_success_iteration: Optional[int]
    final_params: Optional[FilterParams]
    loss_trace: list
    elapsed: float
    predicted_label: int
    skipped_steps: int = 0


# ---------------------------------------------------------------------------
# vectorized objectives (one row per image)
# ---------------------------------------------------------------------------

def _cw_batch(logits, labels, confidence):
    z = np.asarray(logits, dtype=np.float64)
    b = z.shape[0]
    rows = np.arange(b)
    zl = z[rows, labels]
    masked = z.copy()
    masked[rows, labels] = -np.inf
    rival = masked.argmax(axis=1)  # ties resolve to the lowest class index
    margin = zl - masked[rows, rival]
    values = np.maximum(margin, -confidence)
    grads = np.zeros_like(z)
    live = margin > -confidence
    grads[rows[live], labels[live]] = 1.0
    grads[rows[live], rival[live]] = -1.0
    return values, grads


def _ce_batch(logits, labels):
    z = np.asarray(logits, dtype=np.float64)
    rows = np.arange(z.shape[0])
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    p = e / e.sum(axis=1, keepdims=True)
    values = -np.log(np.maximum(p[rows, labels], 1e-300))
    grads = p
    grads[rows, labels] -= 1.0
    return values, grads


# ---------------------------------------------------------------------------
# batched filter forward / parameter gradient (one theta per image)
# ---------------------------------------------------------------------------

def _batch_filter_apply(images, thetas):
    """apply_filter for a (B, H, W, 3) batch with per-image (B, 3, K) weights.

    Elementwise arithmetic mirrors the single-image path exactly, so results
    are bit-identical to apply_filter row by row.
    """
    x = np.asarray(images, dtype=np.float64)
    b = x.shape[0]
    k = thetas.shape[2]
    p = np.minimum((k * x).astype(np.int64), k - 1)
    t = k * x - p
    prefix = np.zeros((b, 3, k + 1))
    prefix[:, :, 1:] = np.cumsum(thetas, axis=2)
    sums = thetas.sum(axis=2)
    bidx = np.arange(b)[:, None, None, None]
    cidx = np.arange(3)[None, None, None, :]
    out = (prefix[bidx, cidx, p] + t * thetas[bidx, cidx, p]) / sums[bidx, cidx]
    return np.clip(out, 0.0, 1.0)


def _batch_filter_grad(images, thetas, upstream):
    """Per-image dL/dtheta (B, 3, K) from per-pixel upstream dL/dF."""
    x = np.asarray(images, dtype=np.float64)
    b, h, w, _ = x.shape
    n = h * w
    k = thetas.shape[2]
    xc = np.ascontiguousarray(x.transpose(0, 3, 1, 2)).reshape(b, 3, n)
    uc = np.ascontiguousarray(np.asarray(upstream, dtype=np.float64)
                              .transpose(0, 3, 1, 2)).reshape(b, 3, n)
    p = np.minimum((k * xc).astype(np.int64), k - 1)
    t = k * xc - p
    prefix = np.zeros((b, 3, k + 1))
    prefix[:, :, 1:] = np.cumsum(thetas, axis=2)
    sums = thetas.sum(axis=2)  # (B, 3)
    wg = np.take_along_axis(thetas, p, axis=2)
    pre = np.take_along_axis(prefix, p, axis=2)
    f = (pre + t * wg) / sums[:, :, None]

    bins = (np.arange(b * 3)[:, None] * k + p.reshape(b * 3, n)).ravel()
    a = np.bincount(bins, weights=uc.ravel(), minlength=b * 3 * k).reshape(b, 3, k)
    bt = np.bincount(bins, weights=(uc * t).ravel(), minlength=b * 3 * k).reshape(b, 3, k)
    total_uf = (uc * f).sum(axis=2)  # (B, 3)
    suffix = a[:, :, ::-1].cumsum(axis=2)[:, :, ::-1]
    above = np.concatenate([suffix[:, :, 1:], np.zeros((b, 3, 1))], axis=2)
    return (above + bt - total_uf[:, :, None]) / sums[:, :, None]


# ---------------------------------------------------------------------------
# filter attack core
# ---------------------------------------------------------------------------

def _advcf_core(model, images, labels, config, style_targets=None):
    """Shared loop of the plain and style-guided filter attacks.

    Returns (adversarials, thetas, success, first_iter, traces, skipped).
    """
    x = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    b = x.shape[0]
    k = config.pieces
    lo, hi = 1.0 / k, config.epsilon / k
    thetas = np.full((b, 3, k), 1.0 / k)
    adv = x.copy()
    done = np.zeros(b, dtype=bool)
    success = np.zeros(b, dtype=bool)
    first_iter = np.full(b, -1, dtype=np.int64)
    skipped = np.zeros(b, dtype=np.int64)
    traces = [[] for _ in range(b)]
    style_w = config.loss.style_weight if style_targets is not None else 0.0

    for t in range(config.iterations + 1):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        x_act = _batch_filter_apply(x[idx], thetas[idx])
        adv[idx] = x_act

        probe = quantize(x_act) if config.quantize_output else x_act
        logits = np.asarray(model.forward_batch(probe), dtype=np.float64)
        values, _ = _cw_batch(logits, labels[idx], config.confidence)
        if style_targets is not None:
            diff = x_act - style_targets[idx]
            values = values + style_w * (diff * diff).sum(axis=(1, 2, 3))
        for j, i in enumerate(idx):
            traces[i].append(float(values[j]))

        mis = logits.argmax(axis=1) != labels[idx]
        hit = idx[mis]
        done[hit] = True
        success[hit] = True
        first_iter[hit] = t
        if t == config.iterations:
            break
        sub = np.flatnonzero(~mis)
        if sub.size == 0:
            continue
        rest = idx[sub]

        # gradient at the unquantized candidate
        logits_g, cache = model._forward_cache(x_act[sub])
        _, grad_logits = _cw_batch(np.asarray(logits_g, dtype=np.float64),
                                   labels[rest], config.confidence)
        input_grads, _ = model.backward_batch(cache, grad_logits)
        if style_targets is not None:
            input_grads = input_grads + 2.0 * style_w * (x_act[sub] - style_targets[rest])
        g = _batch_filter_grad(x[rest], thetas[rest], input_grads)

        norms = np.linalg.norm(g.reshape(len(rest), -1), axis=1)
        ok = norms >= GRAD_NORM_FLOOR
        skipped[rest[~ok]] += 1
        upd = rest[ok]
        if upd.size:
            step = config.step_size * g[ok] / norms[ok, None, None]
            thetas[upd] = np.clip(thetas[upd] - step, lo, hi)

    return adv, thetas, success, first_iter, traces, skipped


def _filter_outcome(model, image, label, config, adv, theta, succ, fit, trace,
                    skipped, t0):
    params = FilterParams(theta, epsilon=config.epsilon)
    probe = quantize(adv) if config.quantize_output else adv
    logits = np.asarray(model.forward_batch(probe[None])[0])
    predicted = int(logits.argmax())
    confirmed = predicted != label
    return AttackOutcome(
        adversarial=adv,
        success=bool(confirmed),
        first_success_iteration=int(fit) if (confirmed and fit >= 0) else None,
        final_params=params,
        loss_trace=trace,
        elapsed=time.perf_counter() - t0,
        predicted_label=predicted,
        skipped_steps=int(skipped),
    )


def advcf_attack(model, image, label, config: AttackConfig = None) -> AttackOutcome:
    """Gradient attack in filter-parameter space.

    Starts from the identity filter, descends the margin loss through the
    model and the filter jacobian with L2-normalized steps, clips weights to
    [1/K, epsilon/K] after every step, and returns the first adversarial
    candidate (the final one, flagged unsuccessful, if none misclassifies).
    The returned image is exactly apply_filter(image, final_params).
    """
    config = config or AttackConfig()
    t0 = time.perf_counter()
    adv, thetas, succ, fit, traces, skipped = _advcf_core(
        model, np.asarray(image)[None], [label], config)
    return _filter_outcome(model, image, label, config, adv[0], thetas[0],
                           succ[0], fit[0], traces[0], skipped[0], t0)


def advcf_attack_batch(model, images, labels, config: AttackConfig = None):
    """Batched advcf_attack; one AttackOutcome per image."""
    config = config or AttackConfig()
    t0 = time.perf_counter()
    adv, thetas, succ, fit, traces, skipped = _advcf_core(model, images, labels, config)
    return [
        _filter_outcome(model, images[i], int(labels[i]), config, adv[i],
                        thetas[i], succ[i], fit[i], traces[i], skipped[i], t0)
        for i in range(len(adv))
    ]


# ---------------------------------------------------------------------------
# style-guided variant
# ---------------------------------------------------------------------------

def style_target_image(image, preset: str, pieces: int = 16) -> np.ndarray:
    """The image re-toned by a built-in preset curve; the L2 anchor of the
    style-guided attack."""
    return apply_filter(np.asarray(image, dtype=np.float64),
                        preset_params(preset, pieces))


def style_guided_advcf(model, image, label, config: AttackConfig,
                       style_target: np.ndarray) -> AttackOutcome:
    """advcf_attack plus a squared-L2 pull of the candidate toward a preset
    styled target; the pull's pixel gradient joins the model gradient before
    chaining into filter parameters. config.loss.style_weight scales it."""
    image = np.asarray(image, dtype=np.float64)
    style_target = np.asarray(style_target, dtype=np.float64)
    if style_target.shape != image.shape:
        raise ValueError(f"style target shape {style_target.shape} != image "
                         f"shape {image.shape}")
    t0 = time.perf_counter()
    adv, thetas, succ, fit, traces, skipped = _advcf_core(
        model, image[None], [label], config, style_targets=style_target[None])
    return _filter_outcome(model, image, label, config, adv[0], thetas[0],
                           succ[0], fit[0], traces[0], skipped[0], t0)


def style_guided_advcf_batch(model, images, labels, config: AttackConfig,
                             style_targets):
    images = np.asarray(images, dtype=np.float64)
    style_targets = np.asarray(style_targets, dtype=np.float64)
    if style_targets.shape != images.shape:
        raise ValueError("style target batch shape mismatch")
    t0 = time.perf_counter()
    adv, thetas, succ, fit, traces, skipped = _advcf_core(
        model, images, labels, config, style_targets=style_targets)
    return [
        _filter_outcome(model, images[i], int(labels[i]), config, adv[i],
                        thetas[i], succ[i], fit[i], traces[i], skipped[i], t0)
        for i in range(len(adv))
    ]


# ---------------------------------------------------------------------------
# pixel-space sign-gradient baseline
# ---------------------------------------------------------------------------

def _ifgsm_core(model, images, labels, bound, step, iterations, quantize_output):
    x0 = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    b = x0.shape[0]
    r = bound / 255.0
    a = step / 255.0
    cur = x0.copy()
    done = np.zeros(b, dtype=bool)
    success = np.zeros(b, dtype=bool)
    first_iter = np.full(b, -1, dtype=np.int64)
    traces = [[] for _ in range(b)]

    for t in range(iterations + 1):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        x_act = cur[idx]
        probe = quantize(x_act) if quantize_output else x_act
        logits = np.asarray(model.forward_batch(probe), dtype=np.float64)
        values, _ = _ce_batch(logits, labels[idx])
        for j, i in enumerate(idx):
            traces[i].append(float(values[j]))
        mis = logits.argmax(axis=1) != labels[idx]
        hit = idx[mis]
        done[hit] = True
        success[hit] = True
        first_iter[hit] = t
        if t == iterations:
            break
        if r == 0.0:
            break  # zero-radius ball: the candidate can never move
        sub = np.flatnonzero(~mis)
        if sub.size == 0:
            continue
        rest = idx[sub]

        logits_g, cache = model._forward_cache(x_act[sub])
        _, grad_logits = _ce_batch(np.asarray(logits_g, dtype=np.float64), labels[rest])
        input_grads, _ = model.backward_batch(cache, grad_logits)
        stepped = cur[rest] + a * np.sign(input_grads)  # ascent on cross-entropy
        stepped = np.clip(stepped, x0[rest] - r, x0[rest] + r)
        cur[rest] = np.clip(stepped, 0.0, 1.0)

    return cur, success, first_iter, traces


def _ifgsm_outcome(model, label, adv, fit, trace, quantize_output, t0):
    probe = quantize(adv) if quantize_output else adv
    logits = np.asarray(model.forward_batch(probe[None])[0])
    predicted = int(logits.argmax())
    confirmed = predicted != label
    return AttackOutcome(
        adversarial=adv,
        success=bool(confirmed),
        first_success_iteration=int(fit) if (confirmed and fit >= 0) else None,
        final_params=None,
        loss_trace=trace,
        elapsed=time.perf_counter() - t0,
        predicted_label=predicted,
    )


def ifgsm_attack(model, image, label, linf_bound=8.0, step=2.0, iterations=7,
                 quantize_output=True) -> AttackOutcome:
    """Iterative sign-gradient attack under a pixel L-infinity ball.

    linf_bound and step are in 0-255 pixel units. Each iteration ascends the
    cross-entropy by step * sign(input gradient), projects into the ball of
    radius linf_bound around the original, and clamps to [0, 1]. Exits on the
    first misclassification.
    """
    if linf_bound < 0 or step <= 0 or iterations < 1:
        raise ValueError("need linf_bound >= 0, step > 0, iterations >= 1")
    t0 = time.perf_counter()
    adv, succ, fit, traces = _ifgsm_core(
        model, np.asarray(image)[None], [label], linf_bound, step, iterations,
        quantize_output)
    return _ifgsm_outcome(model, label, adv[0], fit[0], traces[0],
                          quantize_output, t0)


def ifgsm_attack_batch(model, images, labels, linf_bound=8.0, step=2.0,
                       iterations=7, quantize_output=True):
    if linf_bound < 0 or step <= 0 or iterations < 1:
        raise ValueError("need linf_bound >= 0, step > 0, iterations >= 1")
    t0 = time.perf_counter()
    adv, succ, fit, traces = _ifgsm_core(model, images, labels, linf_bound,
                                         step, iterations, quantize_output)
    return [
        _ifgsm_outcome(model, int(labels[i]), adv[i], fit[i], traces[i],
                       quantize_output, t0)
        for i in range(len(adv))
    ]


# ---------------------------------------------------------------------------
# gradient-free baseline
# ---------------------------------------------------------------------------

def random_filter_search(model, image, label, pieces=64, epsilon=16.0,
                         trials=1000, rng=None, quantize_output=True) -> AttackOutcome:
    """Uniformly sample filter weights in [1/K, epsilon/K] per trial and keep
    the first adversarial hit. The gradient-free reference the filter attack
    is compared against."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    x = np.asarray(image, dtype=np.float64)
    t0 = time.perf_counter()
    trace = []
    theta = None
    for trial in range(trials):
        theta = rng.uniform(1.0 / pieces, epsilon / pieces, size=(3, pieces))
        params = FilterParams(theta, epsilon=epsilon)
        candidate = apply_filter(x, params)
        probe = quantize(candidate) if quantize_output else candidate
        logits = np.asarray(model.forward_batch(probe[None])[0], dtype=np.float64)
        values, _ = _cw_batch(logits[None], np.array([label]), 0.0)
        trace.append(float(values[0]))
        if int(logits.argmax()) != label:
            return AttackOutcome(
                adversarial=candidate,
                success=True,
                first_success_iteration=trial,
                final_params=params,
                loss_trace=trace,
                elapsed=time.perf_counter() - t0,
                predicted_label=int(logits.argmax()),
            )
    params = FilterParams(theta, epsilon=epsilon)
    candidate = apply_filter(x, params)
    probe = quantize(candidate) if quantize_output else candidate
    predicted = int(np.asarray(model.forward_batch(probe[None])[0]).argmax())
    return AttackOutcome(
        adversarial=candidate,
        success=False,
        first_success_iteration=None,
        final_params=params,
        loss_trace=trace,
        elapsed=time.perf_counter() - t0,
        predicted_label=predicted,
    )


def generate_adversarial_batch(model, images, labels, config):
    """Adversarial images plus success flags, without per-image records.

    The bulk path for adversarial training and large robust-accuracy
    counts. ``config`` selects the attack: AttackConfig runs the filter
    attack, IfgsmConfig the pixel baseline. Success is re-judged on the
    returned batch in one forward pass.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if isinstance(config, AttackConfig):
        adv, _, _, _, _, _ = _advcf_core(model, images, labels, config)
        quant = config.quantize_output
    elif isinstance(config, IfgsmConfig):
        adv, _, _, _ = _ifgsm_core(model, images, labels, config.linf_bound,
                                   config.step, config.iterations,
                                   config.quantize_output)
        quant = config.quantize_output
    else:
        raise TypeError(f"unsupported attack config type: {type(config).__name__}")
    probe = quantize(adv) if quant else adv
    logits = np.asarray(model.forward_batch(probe), dtype=np.float64)
    success = logits.argmax(axis=1) != labels
    return adv, success


def random_filter_search_batch(model, images, labels, pieces=64, epsilon=16.0,
                               trials=1000, seed=0, quantize_output=True):
    """Batched random search. Image i draws from its own stream seeded
    (seed, i), so its trial sequence is reproducible no matter when the
    other images in the batch finish."""
    x = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    b = x.shape[0]
    t0 = time.perf_counter()
    rngs = [np.random.default_rng([seed, i]) for i in range(b)]
    done = np.zeros(b, dtype=bool)
    hit_trial = np.full(b, -1, dtype=np.int64)
    thetas = np.full((b, 3, pieces), 1.0 / pieces)
    traces = [[] for _ in range(b)]

    for trial in range(trials):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        for i in idx:
            thetas[i] = rngs[i].uniform(1.0 / pieces, epsilon / pieces,
                                        size=(3, pieces))
        cand = _batch_filter_apply(x[idx], thetas[idx])
        probe = quantize(cand) if quantize_output else cand
        logits = np.asarray(model.forward_batch(probe), dtype=np.float64)
        values, _ = _cw_batch(logits, labels[idx], 0.0)
        for j, i in enumerate(idx):
            traces[i].append(float(values[j]))
        mis = logits.argmax(axis=1) != labels[idx]
        sel = idx[mis]
        done[sel] = True
        hit_trial[sel] = trial

    outcomes = []
    for i in range(b):
        params = FilterParams(thetas[i], epsilon=epsilon)
        candidate = apply_filter(x[i], params)
        probe = quantize(candidate) if quantize_output else candidate
        logits = np.asarray(model.forward_batch(probe[None])[0])
        predicted = int(logits.argmax())
        confirmed = predicted != int(labels[i])
        outcomes.append(AttackOutcome(
            adversarial=candidate,
            success=bool(confirmed),
            first_success_iteration=int(hit_trial[i]) if (confirmed and hit_trial[i] >= 0) else None,
            final_params=params,
            loss_trace=traces[i],
            elapsed=time.perf_counter() - t0,
            predicted_label=predicted,
        ))
    return outcomes

"""Scalar attack objectives and their logit-space gradients.

Every loss returns (value, gradient) so attacks can trace objectives and
chain gradients without a second pass. All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "LossSpec",
    "cw_loss",
    "cross_entropy",
    "style_cw_loss",
    "threshold_loss",
    "pixelwise_ce",
    "log_softmax",
]

LOSS_KINDS = ("cw", "cross_entropy", "style_cw", "threshold", "pixelwise_ce")


@dataclass(frozen=True)
class LossSpec:
    """Which objective an attack optimizes, plus its knobs.

    confidence: margin the misclassification must reach (margin loss only).
    style_weight: pull strength toward style_target (style_cw only;
    0.0001 is the default working value).
    score_threshold: stop level for the scalar threshold loss.
    """

    kind: str = "cw"
    confidence: float = 0.0
    style_weight: float = 0.0001
    style_target: Optional[np.ndarray] = None
    score_threshold: float = 5.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.confidence < 0:
            raise ValueError("confidence must be >= 0")
        if self.style_weight < 0:
            raise ValueError("style_weight must be >= 0")


def cw_loss(logits: np.ndarray, label: int, confidence: float = 0.0):
    """Margin loss: max(Z_label - max_{i != label} Z_i, -confidence).

    Minimizing drives the true-class logit below the best rival by the given
    margin. Subgradient: +1 at the label and -1 at the runner-up while the
    margin is unmet, zero once satisfied. Runner-up ties break toward the
    lowest class index.
    """
    z = np.asarray(logits, dtype=np.float64)
    c = z.shape[0]
    if c < 2:
        raise ValueError("need at least 2 classes")
    if not 0 <= label < c:
        raise ValueError(f"label {label} out of range for {c} classes")
    rival_logits = np.delete(z, label)
    rival = int(np.argmax(rival_logits))
    if rival >= label:
        rival += 1  # map back to full index space; argmax took the lowest tie
    margin = z[label] - z[rival]
    grad = np.zeros(c)
    if margin > -confidence:
        value = margin
        grad[label] = 1.0
        grad[rival] = -1.0
    else:
        value = -confidence
    return float(value), grad


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits: np.ndarray, label: int):
    """-log softmax(logits)[label]; gradient softmax - onehot."""
    logp = log_softmax(logits)
    grad = np.exp(logp)
    grad[label] -= 1.0
    return float(-logp[label]), grad


def style_cw_loss(
    image_current: np.ndarray,
    logits: np.ndarray,
    label: int,
    confidence: float,
    style_weight: float,
    style_target: np.ndarray,
):
    """Margin loss plus a squared-L2 pull of the current image toward a style
    target.

    Returns (value, dL/dlogits, dL/dpixels). The pixel term 2*w*(x - target)
    must be added to the model's input gradient before chaining into filter
    parameters; it does not flow through the logits.
    """
    x = np.asarray(image_current, dtype=np.float64)
    target = np.asarray(style_target, dtype=np.float64)
    if target.shape != x.shape:
        raise ValueError(f"style target shape {target.shape} != image shape {x.shape}")
    base, grad_logits = cw_loss(logits, label, confidence)
    diff = x - target
    value = base + style_weight * float(np.sum(diff * diff))
    pixel_term = 2.0 * style_weight * diff
    return value, grad_logits, pixel_term


def threshold_loss(score: float, score_threshold: float):
    """max(score, threshold): descend while the score exceeds the threshold.

    Gradient is 1 above the threshold and 0 at or below it; an attack loop
    driven by this loss terminates once score < threshold.
    """
    if score > score_threshold:
        return float(score), 1.0
    return float(score_threshold), 0.0


def pixelwise_ce(logit_map: np.ndarray, label_map: np.ndarray):
    """Mean per-pixel cross-entropy over an (H, W, C) logit map.

    label_map is (H, W) integer classes. The mean (rather than sum) keeps
    step sizes comparable across image sizes. Returns (value, gradient map).
    """
    z = np.asarray(logit_map, dtype=np.float64)
    labels = np.asarray(label_map)
    if z.ndim != 3:
        raise ValueError(f"expected (H, W, C) logit map, got {z.shape}")
    if labels.shape != z.shape[:2]:
        raise ValueError(f"label map {labels.shape} != spatial dims {z.shape[:2]}")
    h, w, c = z.shape
    logp = log_softmax(z)
    rows, cols = np.indices((h, w))
    value = float(-logp[rows, cols, labels].mean())
    grad = np.exp(logp)
    grad[rows, cols, labels] -= 1.0
    return value, grad / (h * w)

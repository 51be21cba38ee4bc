"""Adversarial training and robustness measurement.

Training replaces every minibatch by adversarial counterparts generated
against the model's current parameters, then takes the usual SGD step; no
clean examples are mixed in. Checkpoint selection stays on clean
validation accuracy.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .attacks import AttackConfig, IfgsmConfig, generate_adversarial_batch
from .models import Checkpoint, TrainConfig, train

# Published training settings. Inner attacks skip output quantization:
# training consumes the continuous tensors directly.
ADVCF_TRAIN_ATTACK = AttackConfig(iterations=50, step_size=0.1, pieces=64,
                                  epsilon=8.0, quantize_output=False)
IFGSM_TRAIN_ATTACK = IfgsmConfig(iterations=7, step=2.0, linf_bound=8.0,
                                 quantize_output=False)


def attack_summary(config) -> dict:
    """Flat, json-ready description of an attack configuration."""
    if isinstance(config, AttackConfig):
        return {
            "attack": "filter",
            "iterations": config.iterations,
            "step_size": config.step_size,
            "pieces": config.pieces,
            "epsilon": config.epsilon,
            "confidence": config.confidence,
            "quantize_output": config.quantize_output,
        }
    if isinstance(config, IfgsmConfig):
        return {
            "attack": "pixel_linf",
            "iterations": config.iterations,
            "step": config.step,
            "linf_bound": config.linf_bound,
            "quantize_output": config.quantize_output,
        }
    raise TypeError(f"unsupported attack config type: {type(config).__name__}")


def adversarial_train(model, train_set, val_set, attack_config,
                      hyper: TrainConfig = None, epoch_hook=None) -> Checkpoint:
    """Train on freshly generated adversarial minibatches.

    Each minibatch is attacked against the current parameters right before
    its gradient step, so examples are never stale. Returns the epoch
    checkpoint with the best clean validation accuracy, like train().
    """
    summary = attack_summary(attack_config)  # validates the config type
    def regenerate(current_model, images, labels, epoch):
        adv, _ = generate_adversarial_batch(current_model, images, labels,
                                            attack_config)
        return adv

    ckpt = train(model, train_set, val_set, hyper, batch_fn=regenerate,
                 epoch_hook=epoch_hook)
    ckpt.meta["adversarial_training"] = summary
    return ckpt


def robust_accuracy(model, dataset, attack_config, batch_size=250,
                    limit=None) -> float:
    """Fraction of images still correctly classified after a per-image attack.

    Images the model already misclassifies count as not-correct (the attack
    exits immediately on them), so this never exceeds clean accuracy.
    """
    n = len(dataset) if limit is None else min(int(limit), len(dataset))
    if n == 0:
        raise ValueError("cannot measure robust accuracy on an empty dataset")
    survived = 0
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        images = dataset.float_images(idx, dtype=np.float64)
        labels = dataset.labels[idx]
        _, success = generate_adversarial_batch(model, images, labels,
                                                attack_config)
        survived += int((~success).sum())
    return survived / n


def epsilon_k_sweep(model, dataset, epsilons, pieces_list,
                    base_config: AttackConfig = None, batch_size=250,
                    limit=None) -> np.ndarray:
    """Robust accuracy over a (bound, resolution) grid of filter attacks.

    Returns an array of shape (len(epsilons), len(pieces_list)).
    """
    base = base_config or AttackConfig()
    grid = np.zeros((len(epsilons), len(pieces_list)))
    for i, eps in enumerate(epsilons):
        for j, k in enumerate(pieces_list):
            cfg = replace(base, epsilon=float(eps), pieces=int(k))
            grid[i, j] = robust_accuracy(model, dataset, cfg,
                                         batch_size=batch_size, limit=limit)
    return grid

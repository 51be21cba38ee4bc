"""Experiment orchestration: attack grids, defense survival, style runs.

Each entry point takes an in-memory model and dataset plus a Config and
returns an ExperimentReport whose rows carry one record per image (or per
image/variant pair). Successful adversarial images ride along in
``report.attachments`` for the defense stage and for image export.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from .attacks import (
    AttackConfig,
    IfgsmConfig,
    advcf_attack_batch,
    generate_adversarial_batch,
    ifgsm_attack_batch,
    random_filter_search_batch,
    style_guided_advcf_batch,
)
from .config import Config, ConfigError
from .defenses import defense_by_name
from .filters import PRESET_CURVES, apply_filter, preset_params
from .images import quantize
from .losses import LossSpec
from .models import params_digest
from .reports import ExperimentReport, aggregates_from_rows

DEFAULT_EVAL_LIMIT = 500

ATTACK_COLUMNS = ["variant", "index", "label", "clean_correct", "success",
                  "first_success_iteration", "predicted", "elapsed_s"]
DEFENSE_COLUMNS = ["defense", "variant", "index", "label",
                   "defended_prediction", "survived"]
STYLE_COLUMNS = ["preset", "index", "label", "clean_correct",
                 "style_only_correct", "attack_success", "l2_styled",
                 "l2_plain", "styled_closer"]
SWEEP_COLUMNS = ["cell", "epsilon", "pieces", "index", "label",
                 "clean_correct", "robust_correct"]
TRAIN_COLUMNS = ["epoch", "train_loss", "val_accuracy", "robust_val_accuracy"]


def _eval_slice(dataset, config: Config, limit=None):
    n = len(dataset)
    want = limit if limit is not None else config.get("eval.limit", DEFAULT_EVAL_LIMIT)
    want = int(want)
    if want > 0:
        n = min(n, want)
    if n == 0:
        raise ValueError("evaluation set is empty")
    idx = np.arange(n)
    images = dataset.float_images(idx, dtype=np.float64)
    labels = dataset.labels[idx].astype(np.int64)
    return idx, images, labels


def _clean_correct(model, images, labels, batch_size=500):
    out = np.zeros(len(images), dtype=bool)
    for start in range(0, len(images), batch_size):
        sl = slice(start, start + batch_size)
        logits = np.asarray(model.forward_batch(images[sl]))
        out[sl] = logits.argmax(axis=1) == labels[sl]
    return out


def filter_attack_config(config: Config) -> AttackConfig:
    return AttackConfig(
        iterations=int(config.get("attack.iterations", 100)),
        step_size=float(config.get("attack.step_size", 1.0)),
        pieces=int(config.get("attack.pieces", 64)),
        epsilon=float(config.get("attack.epsilon", 16.0)),
        confidence=float(config.get("attack.confidence", 0.0)),
        quantize_output=bool(config.get("attack.quantize_output", True)),
    )


def pixel_attack_config(config: Config) -> IfgsmConfig:
    return IfgsmConfig(
        linf_bound=float(config.get("attack.epsilon", 8.0)),
        step=float(config.get("attack.step_size", 2.0)),
        iterations=int(config.get("attack.iterations", 7)),
        quantize_output=bool(config.get("attack.quantize_output", True)),
    )


def _variant_name(kind: str, epsilon, pieces=None, trials=None) -> str:
    if kind == "filter":
        return f"filter_eps{epsilon:g}_k{pieces}"
    if kind == "pixel_linf":
        return f"pixel_linf_eps{epsilon:g}"
    if kind == "random":
        return f"random_eps{epsilon:g}_k{pieces}_t{trials}"
    raise ConfigError(f"unknown attack kind {kind!r}")


def _attack_rows(variant, idx, labels, clean_ok, outcomes):
    rows = []
    keep = []
    for j, outcome in enumerate(outcomes):
        rows.append({
            "variant": variant,
            "index": int(idx[j]),
            "label": int(labels[j]),
            "clean_correct": bool(clean_ok[j]),
            "success": bool(outcome.success),
            "first_success_iteration": outcome.first_success_iteration,
            "predicted": int(outcome.predicted_label),
            "elapsed_s": float(outcome.elapsed),
        })
        if clean_ok[j] and outcome.success:
            keep.append({
                "variant": variant,
                "index": int(idx[j]),
                "label": int(labels[j]),
                "image": quantize(outcome.adversarial),
            })
    return rows, keep


def run_attack_eval(model, dataset, config: Config = None, seed: int = 0,
                    limit=None) -> ExperimentReport:
    """Attack every eval image over a variant grid and aggregate success.

    The grid is the cross product of ``attack.epsilon_sweep`` and
    ``attack.pieces_sweep`` (defaulting to the single configured cell) for
    the configured attack kind, plus a random-search comparison when
    ``attack.random_trials`` is set.
    """
    config = config or Config()
    t0 = time.perf_counter()
    kind = str(config.get("attack.kind", "filter"))
    if kind not in ("filter", "pixel_linf", "random"):
        raise ConfigError(f"unknown attack kind {kind!r}")
    idx, images, labels = _eval_slice(dataset, config, limit)
    clean_ok = _clean_correct(model, images, labels)

    rows = []
    adversarial = []
    if kind == "filter":
        base = filter_attack_config(config)
        epsilons = [float(e) for e in config.get_list("attack.epsilon_sweep",
                                                      [base.epsilon])]
        pieces = [int(k) for k in config.get_list("attack.pieces_sweep",
                                                  [base.pieces])]
        for eps in epsilons:
            for k in pieces:
                cfg = replace(base, epsilon=eps, pieces=k)
                outcomes = advcf_attack_batch(model, images, labels, cfg)
                new_rows, keep = _attack_rows(
                    _variant_name("filter", eps, k), idx, labels, clean_ok,
                    outcomes)
                rows.extend(new_rows)
                adversarial.extend(keep)
    elif kind == "pixel_linf":
        cfg = pixel_attack_config(config)
        epsilons = [float(e) for e in config.get_list("attack.epsilon_sweep",
                                                      [cfg.linf_bound])]
        for eps in epsilons:
            outcomes = ifgsm_attack_batch(model, images, labels,
                                          linf_bound=eps, step=cfg.step,
                                          iterations=cfg.iterations,
                                          quantize_output=cfg.quantize_output)
            new_rows, keep = _attack_rows(
                _variant_name("pixel_linf", eps), idx, labels, clean_ok,
                outcomes)
            rows.extend(new_rows)
            adversarial.extend(keep)
    else:
        base = filter_attack_config(config)
        trials = int(config.get("attack.random_trials", 1000))
        outcomes = random_filter_search_batch(
            model, images, labels, pieces=base.pieces, epsilon=base.epsilon,
            trials=trials, seed=seed, quantize_output=base.quantize_output)
        new_rows, keep = _attack_rows(
            _variant_name("random", base.epsilon, base.pieces, trials), idx,
            labels, clean_ok, outcomes)
        rows.extend(new_rows)
        adversarial.extend(keep)

    if kind == "filter" and int(config.get("attack.random_trials", 0)) > 0:
        base = filter_attack_config(config)
        trials = int(config.get("attack.random_trials", 0))
        outcomes = random_filter_search_batch(
            model, images, labels, pieces=base.pieces, epsilon=base.epsilon,
            trials=trials, seed=seed, quantize_output=base.quantize_output)
        new_rows, keep = _attack_rows(
            _variant_name("random", base.epsilon, base.pieces, trials), idx,
            labels, clean_ok, outcomes)
        rows.extend(new_rows)
        adversarial.extend(keep)

    total = time.perf_counter() - t0
    report = ExperimentReport(
        kind="attack_eval",
        config=config.as_dict(),
        seed=seed,
        checkpoint_id=params_digest(model),
        columns=ATTACK_COLUMNS,
        rows=rows,
        aggregates=aggregates_from_rows("attack_eval", rows),
        timing={"total_s": total, "per_image_s": total / max(len(idx), 1)},
    )
    report.attachments["adversarial"] = adversarial
    return report


def run_defense_eval(attack_report: ExperimentReport, defense_names,
                     model, seed: int = 0) -> ExperimentReport:
    """Survival rate of previously successful adversarial images per defense.

    Consumes the images attached to the attack report. Randomized defenses
    draw from a stream seeded (seed, defense position, image index) so runs
    reproduce.
    """
    names = list(defense_names)
    if not names:
        raise ConfigError("no defenses requested")
    transforms = [(str(n), defense_by_name(n)) for n in names]
    items = attack_report.attachments.get("adversarial", [])
    if not items:
        raise ValueError("attack report has no successful adversarial images")

    t0 = time.perf_counter()
    rows = []
    for d_i, (name, transform) in enumerate(transforms):
        defended = np.stack([
            transform(item["image"],
                      np.random.default_rng([seed, d_i, item["index"]]))
            for item in items
        ])
        logits = np.asarray(model.forward_batch(defended))
        preds = logits.argmax(axis=1)
        for item, pred in zip(items, preds):
            rows.append({
                "defense": name,
                "variant": item["variant"],
                "index": item["index"],
                "label": item["label"],
                "defended_prediction": int(pred),
                "survived": bool(pred != item["label"]),
            })

    total = time.perf_counter() - t0
    return ExperimentReport(
        kind="defense_eval",
        config={"defense.names": names, **attack_report.config},
        seed=seed,
        checkpoint_id=params_digest(model),
        columns=DEFENSE_COLUMNS,
        rows=rows,
        aggregates=aggregates_from_rows("defense_eval", rows),
        timing={"total_s": total},
    )


def run_style_eval(model, dataset, config: Config = None, seed: int = 0,
                   limit=None) -> ExperimentReport:
    """Preset-filtered accuracy plus the style-guided attack, per preset.

    For every image where both the plain and the style-guided attack
    succeed, records which adversarial image lands closer (L2) to the
    preset-styled target.
    """
    config = config or Config()
    t0 = time.perf_counter()
    presets = [str(p) for p in config.get_list("style.presets",
                                               list(PRESET_CURVES))]
    for name in presets:
        if name not in PRESET_CURVES:
            raise ConfigError(f"unknown style preset {name!r}")
    curve_pieces = int(config.get("style.curve_pieces", 16))
    weight = float(config.get("style.weight", 1e-4))

    idx, images, labels = _eval_slice(dataset, config, limit)
    clean_ok = _clean_correct(model, images, labels)

    base = filter_attack_config(config)
    styled_cfg = replace(base, loss=LossSpec(style_weight=weight))
    plain_out = advcf_attack_batch(model, images, labels, base)

    rows = []
    attachments = []
    for preset in presets:
        params = preset_params(preset, curve_pieces)
        targets = np.stack([apply_filter(im, params) for im in images])
        logits = np.asarray(model.forward_batch(quantize(targets)))
        style_preds = logits.argmax(axis=1)
        styled_out = style_guided_advcf_batch(model, images, labels,
                                              styled_cfg, targets)
        for j in range(len(idx)):
            both = (clean_ok[j] and styled_out[j].success
                    and plain_out[j].success)
            l2s = float(np.linalg.norm(styled_out[j].adversarial - targets[j]))
            l2p = float(np.linalg.norm(plain_out[j].adversarial - targets[j]))
            rows.append({
                "preset": preset,
                "index": int(idx[j]),
                "label": int(labels[j]),
                "clean_correct": bool(clean_ok[j]),
                "style_only_correct": bool(style_preds[j] == labels[j]),
                "attack_success": bool(styled_out[j].success),
                "l2_styled": l2s if styled_out[j].success else None,
                "l2_plain": l2p if plain_out[j].success else None,
                "styled_closer": (bool(l2s < l2p) if both else None),
            })
            if clean_ok[j] and styled_out[j].success:
                attachments.append({
                    "variant": f"style_{preset}",
                    "index": int(idx[j]),
                    "label": int(labels[j]),
                    "image": quantize(styled_out[j].adversarial),
                })

    total = time.perf_counter() - t0
    report = ExperimentReport(
        kind="style_eval",
        config=config.as_dict(),
        seed=seed,
        checkpoint_id=params_digest(model),
        columns=STYLE_COLUMNS,
        rows=rows,
        aggregates=aggregates_from_rows("style_eval", rows),
        timing={"total_s": total},
    )
    report.attachments["adversarial"] = attachments
    return report


def run_sweep_eval(model, dataset, config: Config = None, seed: int = 0,
                   limit=None) -> ExperimentReport:
    """Robust accuracy over the (epsilon, pieces) filter-attack grid."""
    config = config or Config()
    t0 = time.perf_counter()
    base = filter_attack_config(config)
    epsilons = [float(e) for e in config.get_list("attack.epsilon_sweep",
                                                  [base.epsilon])]
    pieces = [int(k) for k in config.get_list("attack.pieces_sweep",
                                              [base.pieces])]
    idx, images, labels = _eval_slice(dataset, config, limit)
    clean_ok = _clean_correct(model, images, labels)

    rows = []
    for eps in epsilons:
        for k in pieces:
            cfg = replace(base, epsilon=eps, pieces=k)
            _, success = generate_adversarial_batch(model, images, labels, cfg)
            cell = f"eps{eps:g}_k{k}"
            for j in range(len(idx)):
                rows.append({
                    "cell": cell,
                    "epsilon": eps,
                    "pieces": k,
                    "index": int(idx[j]),
                    "label": int(labels[j]),
                    "clean_correct": bool(clean_ok[j]),
                    "robust_correct": not bool(success[j]),
                })

    total = time.perf_counter() - t0
    return ExperimentReport(
        kind="sweep",
        config=config.as_dict(),
        seed=seed,
        checkpoint_id=params_digest(model),
        columns=SWEEP_COLUMNS,
        rows=rows,
        aggregates=aggregates_from_rows("sweep", rows),
        timing={"total_s": total},
    )


def training_report(checkpoint, config: Config, seed: int,
                    history=None) -> ExperimentReport:
    """Epoch-indexed metrics log for a (possibly adversarial) training run."""
    entries = history if history is not None else checkpoint.meta.get("history", [])
    rows = [{
        "epoch": int(h["epoch"]),
        "train_loss": float(h["train_loss"]),
        "val_accuracy": float(h["val_accuracy"]),
        "robust_val_accuracy": (float(h["robust_val_accuracy"])
                                if h.get("robust_val_accuracy") is not None
                                else None),
    } for h in entries]
    return ExperimentReport(
        kind="train",
        config=config.as_dict(),
        seed=seed,
        checkpoint_id=params_digest(checkpoint),
        columns=TRAIN_COLUMNS,
        rows=rows,
        aggregates=aggregates_from_rows("train", rows),
        timing={},
    )

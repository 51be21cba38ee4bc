"""Command-line surface: train, advtrain, attack, defend, sweep, style, report.

Every run reads an optional flat config file, writes reports (JSON plus
CSV) under --out, and exports adversarial images as PPM. Exit codes: 0 on
success, 1 on configuration problems (bad keys, unknown names, malformed
config), 2 on data problems (missing or corrupt datasets, checkpoints,
reports).
"""

from __future__ import annotations

import argparse
import os
import sys

from .advtrain import adversarial_train, attack_summary, robust_accuracy
from .attacks import AttackConfig, IfgsmConfig
from .cifar10 import load_cifar10
from .config import Config, ConfigError, load_config
from .harness import (
    run_attack_eval,
    run_defense_eval,
    run_style_eval,
    run_sweep_eval,
    training_report,
)
from .images import write_ppm
from .models import (
    LinearColorProbe,
    TinyCNN,
    TrainConfig,
    build_model,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .reports import emit_report, read_report, report_digest, verify_aggregates
from .synthdata import default_data_root, ensure_corpus

DEFAULT_DEFENSES = ["grayscale", "median3", "jpeg:30", "resize_pad"]


class _Parser(argparse.ArgumentParser):
    # usage mistakes are configuration mistakes: exit 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="flat key=value file")
    common.add_argument("--checkpoint", default=None, help="model checkpoint path")
    common.add_argument("--data", default=None, help="dataset directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default="runs", help="output directory")
    common.add_argument("--limit", type=int, default=None,
                        help="evaluation image budget; 0 means all")
    common.add_argument("--single-thread", action="store_true",
                        help="pin numeric libraries to one thread")

    parser = _Parser(prog="advfilter",
                     description="Color-filter adversarial attack toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("train", "train a clean model"),
        ("advtrain", "adversarially train a model"),
        ("attack", "attack an evaluation set"),
        ("defend", "attack, then measure defense survival"),
        ("sweep", "robust accuracy over an epsilon/pieces grid"),
        ("style", "preset-filter accuracy and style-guided attack"),
    ]:
        sub.add_parser(name, parents=[common], help=help_text)
    rep = sub.add_parser("report", parents=[common],
                         help="verify and summarize a stored report")
    rep.add_argument("path", help="report JSON file")
    return parser


def _load_args_config(args) -> Config:
    config = load_config(args.config) if args.config else Config()
    if args.seed is not None:
        config = config.overridden(**{"run.seed": int(args.seed)})
    return config


def _seed(config: Config) -> int:
    return int(config.get("run.seed", 0))


def _data_dir(args, config: Config) -> str:
    if args.data:
        return args.data
    root = config.get("data.root")
    if root:
        return str(root)
    return ensure_corpus(default_data_root())


def _load_data(args, config: Config):
    directory = _data_dir(args, config)
    return load_cifar10(directory)


def _fresh_model(config: Config, dataset):
    arch = str(config.get("model.arch", "tiny_cnn"))
    h, w = dataset.image_shape
    if arch == "tiny_cnn":
        return TinyCNN(class_count=dataset.class_count, input_shape=(h, w),
                       seed=int(config.get("model.seed", 0)))
    if arch == "linear_color_probe":
        return LinearColorProbe(class_count=dataset.class_count,
                                input_shape=(h, w))
    raise ConfigError(f"unknown model.arch {arch!r}")


def _load_model(args):
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required for this command")
    return build_model(load_checkpoint(args.checkpoint))


def _train_hyper(config: Config) -> TrainConfig:
    base = TrainConfig()
    return TrainConfig(
        batch_size=int(config.get("train.batch_size", base.batch_size)),
        epochs=int(config.get("train.epochs", base.epochs)),
        learning_rate=float(config.get("train.learning_rate", base.learning_rate)),
        momentum=float(config.get("train.momentum", base.momentum)),
        weight_decay=float(config.get("train.weight_decay", base.weight_decay)),
        seed=int(config.get("train.seed", _seed(config))),
    )


def _training_attack(config: Config):
    kind = str(config.get("advtrain.attack", "filter"))
    if kind == "filter":
        return AttackConfig(
            iterations=int(config.get("advtrain.iterations", 50)),
            step_size=float(config.get("advtrain.step_size", 0.1)),
            pieces=int(config.get("advtrain.pieces", 64)),
            epsilon=float(config.get("advtrain.epsilon", 8.0)),
            quantize_output=bool(config.get("advtrain.quantize_output", False)),
        )
    if kind == "pixel_linf":
        return IfgsmConfig(
            iterations=int(config.get("advtrain.iterations", 7)),
            step=float(config.get("advtrain.step_size", 2.0)),
            linf_bound=float(config.get("advtrain.epsilon", 8.0)),
            quantize_output=bool(config.get("advtrain.quantize_output", False)),
        )
    raise ConfigError(f"unknown advtrain.attack {kind!r}")


def _emit(report, out_dir, stem):
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, f"{stem}.json")
    emit_report(report, json_path, "json")
    emit_report(report, os.path.join(out_dir, f"{stem}.csv"), "csv")
    return json_path


def _export_images(report, out_dir):
    items = report.attachments.get("adversarial", [])
    for item in items:
        directory = os.path.join(out_dir, "images", item["variant"])
        os.makedirs(directory, exist_ok=True)
        write_ppm(item["image"],
                  os.path.join(directory, f"adv_{item['index']:05d}.ppm"))
    return len(items)


def _print_aggregates(report):
    for name in sorted(report.aggregates):
        stats = report.aggregates[name]
        parts = ", ".join(f"{k}={v}" for k, v in sorted(stats.items()))
        print(f"  {name}: {parts}")


def _cmd_train(args, adversarial: bool) -> int:
    config = _load_args_config(args)
    train_set, val_set, _ = _load_data(args, config)
    model = _fresh_model(config, train_set)
    hyper = _train_hyper(config)

    if adversarial:
        attack_config = _training_attack(config)
        robust_limit = int(config.get("advtrain.robust_eval_limit", 100))

        def hook(epoch, entry):
            if robust_limit > 0:
                entry["robust_val_accuracy"] = robust_accuracy(
                    model, val_set, attack_config, limit=robust_limit)
            print(f"  epoch {epoch}: loss {entry['train_loss']:.4f} "
                  f"val {entry['val_accuracy']:.4f}"
                  + (f" robust {entry['robust_val_accuracy']:.4f}"
                     if "robust_val_accuracy" in entry else ""))

        ckpt = adversarial_train(model, train_set, val_set, attack_config,
                                 hyper, epoch_hook=hook)
        print(f"adversarial training ({attack_summary(attack_config)['attack']}) done")
    else:
        def hook(epoch, entry):
            print(f"  epoch {epoch}: loss {entry['train_loss']:.4f} "
                  f"val {entry['val_accuracy']:.4f}")
        ckpt = train(model, train_set, val_set, hyper, epoch_hook=hook)

    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.bin")
    save_checkpoint(ckpt, ckpt_path)
    report = training_report(ckpt, config, _seed(config))
    path = _emit(report, args.out, "train_report")
    print(f"best val accuracy {ckpt.meta['val_accuracy']:.4f} "
          f"(epoch {ckpt.meta['best_epoch']})")
    print(f"checkpoint: {ckpt_path}")
    print(f"report: {path}")
    return 0


def _cmd_attack(args) -> int:
    config = _load_args_config(args)
    _, _, test_set = _load_data(args, config)
    model = _load_model(args)
    report = run_attack_eval(model, test_set, config, seed=_seed(config),
                             limit=args.limit)
    path = _emit(report, args.out, "attack_report")
    count = _export_images(report, args.out)
    print(f"attack report: {path} ({count} adversarial images exported)")
    _print_aggregates(report)
    return 0


def _cmd_defend(args) -> int:
    config = _load_args_config(args)
    _, _, test_set = _load_data(args, config)
    model = _load_model(args)
    attack_report = run_attack_eval(model, test_set, config,
                                    seed=_seed(config), limit=args.limit)
    _emit(attack_report, args.out, "attack_report")
    _export_images(attack_report, args.out)
    defenses = [str(d) for d in config.get_list("defense.names",
                                                DEFAULT_DEFENSES)]
    report = run_defense_eval(attack_report, defenses, model,
                              seed=_seed(config))
    path = _emit(report, args.out, "defense_report")
    print(f"defense report: {path}")
    _print_aggregates(report)
    return 0


def _cmd_sweep(args) -> int:
    config = _load_args_config(args)
    _, _, test_set = _load_data(args, config)
    model = _load_model(args)
    report = run_sweep_eval(model, test_set, config, seed=_seed(config),
                            limit=args.limit)
    path = _emit(report, args.out, "sweep_report")
    print(f"sweep report: {path}")
    _print_aggregates(report)
    return 0


def _cmd_style(args) -> int:
    config = _load_args_config(args)
    _, _, test_set = _load_data(args, config)
    model = _load_model(args)
    report = run_style_eval(model, test_set, config, seed=_seed(config),
                            limit=args.limit)
    path = _emit(report, args.out, "style_report")
    _export_images(report, args.out)
    print(f"style report: {path}")
    _print_aggregates(report)
    return 0


def _cmd_report(args) -> int:
    report = read_report(args.path)
    ok = verify_aggregates(report)
    print(f"kind: {report.kind}")
    print(f"rows: {len(report.rows)}  seed: {report.seed}  "
          f"checkpoint: {report.checkpoint_id}")
    print(f"digest (volatile fields excluded): {report_digest(report)}")
    print(f"aggregates verified: {'yes' if ok else 'NO'}")
    _print_aggregates(report)
    if args.out and args.out != "runs":
        os.makedirs(args.out, exist_ok=True)
        emit_report(report, os.path.join(args.out, "report.csv"), "csv")
    return 0 if ok else 2


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "train":
            return _cmd_train(args, adversarial=False)
        if args.command == "advtrain":
            return _cmd_train(args, adversarial=True)
        if args.command == "attack":
            return _cmd_attack(args)
        if args.command == "defend":
            return _cmd_defend(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "style":
            return _cmd_style(args)
        if args.command == "report":
            return _cmd_report(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

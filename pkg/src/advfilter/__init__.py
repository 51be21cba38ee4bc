"""Color-filter adversarial attacks, defenses, and adversarial training for
small image classifiers, in plain numpy."""

from ._version import __version__
from .images import as_image, quantize, read_ppm, write_ppm
from .cifar10 import Dataset, LabeledImage, load_cifar10
from .filters import (
    FilterParams,
    apply_filter,
    clip_params,
    filter_param_gradient,
    identity_params,
    params_from_text,
    params_to_text,
    preset_params,
    sample_params_uniform,
    PRESET_CURVES,
)
from .losses import (
    LossSpec,
    cw_loss,
    cross_entropy,
    style_cw_loss,
    threshold_loss,
    pixelwise_ce,
    log_softmax,
)
from .models import (
    Checkpoint,
    DifferentiableClassifier,
    LinearColorProbe,
    TinyCNN,
    TrainConfig,
    accuracy,
    build_model,
    forward,
    input_gradient,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .synthdata import ensure_corpus
from .attacks import (
    AttackConfig,
    AttackOutcome,
    IfgsmConfig,
    generate_adversarial_batch,
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
from .defenses import (
    DEFENSE_NAMES,
    defense_by_name,
    grayscale,
    jpeg_roundtrip,
    median_filter3,
    random_resize_pad,
    resize_bilinear,
)
from .images import psnr
from .advtrain import (
    ADVCF_TRAIN_ATTACK,
    IFGSM_TRAIN_ATTACK,
    adversarial_train,
    attack_summary,
    epsilon_k_sweep,
    robust_accuracy,
)
from .config import Config, ConfigError, load_config, parse_config_text
from .reports import (
    ExperimentReport,
    aggregates_from_rows,
    emit_report,
    from_json_text,
    read_report,
    report_digest,
    verify_aggregates,
)
__all__ = [
    "as_image", "quantize", "read_ppm", "write_ppm",
    "Dataset", "LabeledImage", "load_cifar10",
    "FilterParams", "apply_filter", "clip_params", "filter_param_gradient",
    "identity_params", "params_from_text", "params_to_text", "preset_params",
    "sample_params_uniform", "PRESET_CURVES",
    "LossSpec", "cw_loss", "cross_entropy", "style_cw_loss",
    "threshold_loss", "pixelwise_ce", "log_softmax",
    "Checkpoint", "DifferentiableClassifier", "LinearColorProbe", "TinyCNN",
    "TrainConfig", "accuracy", "build_model", "forward", "input_gradient",
    "load_checkpoint", "save_checkpoint", "train",
    "ensure_corpus",
    "AttackConfig", "AttackOutcome", "advcf_attack", "advcf_attack_batch",
    "ifgsm_attack", "ifgsm_attack_batch", "random_filter_search",
    "random_filter_search_batch", "style_guided_advcf",
    "style_guided_advcf_batch", "style_target_image",
    "DEFENSE_NAMES", "defense_by_name", "grayscale", "jpeg_roundtrip",
    "median_filter3", "random_resize_pad", "resize_bilinear", "psnr",
    "IfgsmConfig", "generate_adversarial_batch",
    "ADVCF_TRAIN_ATTACK", "IFGSM_TRAIN_ATTACK", "adversarial_train",
    "attack_summary", "epsilon_k_sweep", "robust_accuracy",
    "Config", "ConfigError", "load_config", "parse_config_text",
    "ExperimentReport", "aggregates_from_rows", "emit_report",
    "from_json_text", "read_report", "report_digest", "verify_aggregates",
    "__version__",
]

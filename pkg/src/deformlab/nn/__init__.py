"""Self-contained numpy CNN engine: layers, assembly, training, validation."""

from .gradcheck import FD_STEP, GradCheckReport, gradient_check
from .layers import (
    AvgPool,
    BatchNorm,
    Conv2d,
    GlobalAvgPool,
    Linear,
    MaxPool,
    ReLU,
    ShapeError,
    Subsample,
)
from .network import (
    ARCH_CIFAR,
    ARCH_IMAGENET,
    DOWNSAMPLE_KINDS,
    ActivationTrace,
    ArchitectureError,
    CheckpointError,
    Network,
    check_downsample_kind,
    gaussian_kernel,
    init_network,
    load_checkpoint,
    parse_architecture,
    save_checkpoint,
    smooth_filters,
    truncated_normal,
)
from .train import (
    TrainConfig,
    TrainHistory,
    TrainingDiverged,
    evaluate,
    softmax_cross_entropy,
    train_sgd,
)

__all__ = [
    "ARCH_CIFAR",
    "ARCH_IMAGENET",
    "DOWNSAMPLE_KINDS",
    "ActivationTrace",
    "ArchitectureError",
    "AvgPool",
    "BatchNorm",
    "CheckpointError",
    "Conv2d",
    "FD_STEP",
    "GlobalAvgPool",
    "GradCheckReport",
    "Linear",
    "MaxPool",
    "Network",
    "ReLU",
    "ShapeError",
    "Subsample",
    "TrainConfig",
    "TrainHistory",
    "TrainingDiverged",
    "check_downsample_kind",
    "evaluate",
    "gaussian_kernel",
    "gradient_check",
    "init_network",
    "load_checkpoint",
    "parse_architecture",
    "save_checkpoint",
    "smooth_filters",
    "softmax_cross_entropy",
    "train_sgd",
    "truncated_normal",
]

"""cftalign: coarse-to-fine trained facial landmark regression.

A small numpy autodiff engine, a deeply supervised dual-head landmark
network, the staged loss-weight training loop, augmentation geometry,
and evaluation tooling, all verifiable at desk scale on synthetic data.
"""

from .data import (AnnotatedImage, AugmentationSpec, EncodedDataset, LandmarkSet,
                   PartitionScheme, augment_dataset, builtin_scheme, crop_and_encode,
                   degrade_quality, encode_dataset, flip_sample, load_dataset,
                   rotate_sample, translate_box)
from .evaluate import EvalReport, compare_runs, normalized_mean_error
from .losses import LossBreakdown, SubsetTargets, combined_loss, multi_head_loss, subset_loss
from .network import AlignmentNet, NetworkConfig, build_network, forward, init_parameters
from .synthetic import (SyntheticFaceParams, generate_synthetic_dataset,
                        generate_synthetic_face, make_synthetic_scheme)
from .tensor import BatchNormState, GradientTape, Tensor
from .trainer import SGD, TrainSchedule, lambda_for_stage, train_cft, train_dt

__version__ = "0.1.0"

__all__ = [
    "AlignmentNet", "AnnotatedImage", "AugmentationSpec", "BatchNormState",
    "EncodedDataset", "EvalReport", "GradientTape", "LandmarkSet", "LossBreakdown",
    "NetworkConfig", "PartitionScheme", "SGD", "SubsetTargets", "SyntheticFaceParams",
    "Tensor", "TrainSchedule", "augment_dataset", "build_network", "builtin_scheme",
    "combined_loss", "compare_runs", "crop_and_encode", "degrade_quality",
    "encode_dataset", "flip_sample", "forward", "generate_synthetic_dataset",
    "generate_synthetic_face", "init_parameters", "lambda_for_stage", "load_dataset",
    "make_synthetic_scheme", "multi_head_loss", "normalized_mean_error",
    "rotate_sample", "subset_loss", "train_cft", "train_dt", "translate_box",
]

"""Joint image filtering with learned per-pixel sparse kernels and sampling
offsets, applied as an explicit weighted average over deformable neighbors."""

from .checkpoint import load_checkpoint, save_checkpoint
from .filtering import (
    KernelField,
    apply_kernel_field,
    iterative_filter,
    weighted_average_plain,
    weighted_average_residual,
)
from .inference import (
    infer,
    infer_per_pixel,
    infer_shift_and_stitch,
    infer_single_pass,
)
from .networks import Dkn, DknConfig, Fdkn, FdknConfig, build_model, receptive_field
from .sampling import bilinear_weight, sample_bilinear
from .synthetic import SamplePair, make_synthetic_dataset, make_training_pair
from .tensor import Parameter, Tensor, finite_diff_check, no_grad, precision
from .train import Adam, TrainConfig, l1_loss, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Dkn",
    "DknConfig",
    "Fdkn",
    "FdknConfig",
    "KernelField",
    "Parameter",
    "SamplePair",
    "Tensor",
    "TrainConfig",
    "apply_kernel_field",
    "bilinear_weight",
    "build_model",
    "finite_diff_check",
    "infer",
    "infer_per_pixel",
    "infer_shift_and_stitch",
    "infer_single_pass",
    "iterative_filter",
    "l1_loss",
    "load_checkpoint",
    "make_synthetic_dataset",
    "make_training_pair",
    "no_grad",
    "precision",
    "receptive_field",
    "sample_bilinear",
    "save_checkpoint",
    "train",
    "weighted_average_plain",
    "weighted_average_residual",
]

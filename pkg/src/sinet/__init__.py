"""Channel-specific convolutional sparse coding for underwater image enhancement.

The package is organized around a small dense-tensor layer (``tensor_ops``), a
classic iterative sparse-coding solver used as a correctness oracle (``csc``),
the unrolled trainable estimation block (``sfeb``), the full three-branch
network (``model``), losses/training/metrics, and a CLI (``cli``).
"""

from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .csc import (
    CscProblem,
    csc_objective,
    estimate_lipschitz,
    ista_iterate,
    ista_solve,
    soft_threshold,
)
from .losses import (
    LossConfig,
    LossTerms,
    loss_intensity,
    loss_ssim,
    loss_texture,
    ssim,
    total_loss,
    total_loss_and_grad,
)
from .metrics import FlopsReport, MetricReport, evaluate_dir, flops_estimate, psnr
from .model import (
    ModelConfig,
    SinetParams,
    VARIANTS,
    concat_channels,
    init_params,
    named_parameters,
    replace_parameters,
    sinet_backward,
    sinet_forward,
    split_channels,
)
from .sfeb import (
    SfebParams,
    ThresholdSchedule,
    sfeb_backward,
    sfeb_forward,
    softplus,
    theta_at,
)
from .tensor_ops import (
    KernelBank,
    conv2d_adjoint,
    conv2d_same,
    conv2d_param_grad,
    sobel_gradients,
    transpose_bank,
)
from .training import TrainConfig, adam_init, adam_step, augment_pair, grad_check, train

__version__ = "0.1.0"

__all__ = [
    "CheckpointFormatError",
    "CscProblem",
    "FlopsReport",
    "KernelBank",
    "LossConfig",
    "LossTerms",
    "MetricReport",
    "ModelConfig",
    "SfebParams",
    "SinetParams",
    "ThresholdSchedule",
    "TrainConfig",
    "VARIANTS",
    "adam_init",
    "adam_step",
    "augment_pair",
    "concat_channels",
    "conv2d_adjoint",
    "conv2d_param_grad",
    "conv2d_same",
    "csc_objective",
    "estimate_lipschitz",
    "evaluate_dir",
    "flops_estimate",
    "grad_check",
    "init_params",
    "ista_iterate",
    "ista_solve",
    "load_checkpoint",
    "loss_intensity",
    "loss_ssim",
    "loss_texture",
    "named_parameters",
    "psnr",
    "replace_parameters",
    "save_checkpoint",
    "sfeb_backward",
    "sfeb_forward",
    "sinet_backward",
    "sinet_forward",
    "sobel_gradients",
    "soft_threshold",
    "softplus",
    "split_channels",
    "ssim",
    "theta_at",
    "total_loss",
    "total_loss_and_grad",
    "train",
    "transpose_bank",
]

"""Disparity-constrained stereo super-resolution on a small autodiff engine."""

from .tensor import Tensor, no_grad, set_nan_checks
from .data import StereoSample, bicubic_resize, extract_patches, synth_stereo
from .model import ModelParams, forward_full, init_model, super_resolve, warp
from .losses import LossBreakdown, compute_losses
from .metrics import evaluate, psnr, ssim
from .training import TrainConfig, desk_config, train

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "no_grad",
    "set_nan_checks",
    "StereoSample",
    "bicubic_resize",
    "extract_patches",
    "synth_stereo",
    "ModelParams",
    "forward_full",
    "init_model",
    "super_resolve",
    "warp",
    "LossBreakdown",
    "compute_losses",
    "evaluate",
    "psnr",
    "ssim",
    "TrainConfig",
    "desk_config",
    "train",
]

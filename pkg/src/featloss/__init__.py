"""Differentiable ORB feature losses, SRM noise features, mask-balanced
inpainting objectives and their evaluation metrics, in plain numpy."""
from .losses import LossReport, gan_loss, generator_objective, weighted_cross_entropy, weighted_l1
from .masks import BinaryMask, ClassScoreMap, balance_weights, collapse_dynamic
from .orb import (
    FeatureMaps,
    OrbLossConfig,
    angle_map,
    brief_kernels,
    desc_loss,
    descriptor_maps,
    det_loss,
    detect_map,
    fast_kernels,
    feature_maps,
    moment_kernels,
    ori_loss,
    orb_loss,
    orientation_maps,
)
from .srm import assemble_disc_input, extract_noise, srm_kernels
from .tensor import KernelBank, ShapeError, conv2d, conv2d_grad_input, grad_check, smooth

__version__ = "0.1.0"

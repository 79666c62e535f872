"""Multi-branch attention network for image dehazing and deblurring.

A small numpy autodiff core (:mod:`cmfnet.tensor`, :mod:`cmfnet.functional`)
drives three attention-specialised U-Net branches whose outputs are fused by a
learnable mixed skip connection (:mod:`cmfnet.model`).
"""

from .attention import AttentionBlock, AttentionKind
from .kernels import BACKEND
from .losses import LossConfig, evaluate_pair, psnr, ssim, total_loss
from .model import CMFNet, CmfnetConfig, SkipVariant, asc_forward, msc_forward, param_count
from .tensor import Tensor, no_grad

__all__ = [
    "AttentionBlock",
    "AttentionKind",
    "BACKEND",
    "CMFNet",
    "CmfnetConfig",
    "LossConfig",
    "SkipVariant",
    "Tensor",
    "asc_forward",
    "evaluate_pair",
    "msc_forward",
    "no_grad",
    "param_count",
    "psnr",
    "ssim",
    "total_loss",
]
__version__ = "0.1.0"

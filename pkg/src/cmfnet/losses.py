"""Image quality metrics and the training objectives built from them."""

from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np

from . import functional as F
from .tensor import Tensor, ShapeError, abs as tabs, clamp_min, default_dtype, log, no_grad, sqrt

MSE_FLOOR = 1e-12
LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


class LossKind(str, enum.Enum):
    L1 = "l1"
    PS = "ps"


class Protocol(str, enum.Enum):
    RGB = "rgb"
    YLUMA = "yluma"


@dataclasses.dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.05
    omega: float = 0.005
    epsilon: float = 1e-3
    kind: LossKind = LossKind.PS

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if min(self.alpha, self.omega, self.epsilon) <= 0:
            raise ValueError("alpha, omega and epsilon must be positive")


@dataclasses.dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    @property
    def c1(self):
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self):
        return (self.k2 * self.data_range) ** 2


def gaussian_window(size=11, sigma=1.5):
    """Normalized 2-D Gaussian window (float64, sums to 1)."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    g /= g.sum()
    w = np.outer(g, g)
    return w / w.sum()


def _as_tensor4(x):
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
    if t.ndim == 2:
        t = t.reshape(1, 1, *t.shape)
    elif t.ndim == 3:
        t = t.reshape(1, *t.shape)
    if t.ndim != 4:
        raise ShapeError(f"expected an image tensor, got shape {t.shape}")
    return t


def _check_pair(x, y):
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {y.shape}")


def ssim_map(x, y, cfg=SsimConfig()):
    """Local SSIM over valid Gaussian-window positions, per channel."""
    x, y = _as_tensor4(x), _as_tensor4(y)
    _check_pair(x, y)
    if min(x.shape[2:]) < cfg.window:
        raise ShapeError(f"image {x.shape[2]}x{x.shape[3]} is smaller than the {cfg.window}x{cfg.window} window")
    win = Tensor(gaussian_window(cfg.window, cfg.sigma).astype(x.dtype))

    def filt(t):
        return F.depthwise_conv2d(t, win)

    mu_x, mu_y = filt(x), filt(y)
    var_x = filt(x * x) - mu_x * mu_x
    var_y = filt(y * y) - mu_y * mu_y
    cov = filt(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + cfg.c1) * (2.0 * cov + cfg.c2)
    den = (mu_x * mu_x + mu_y * mu_y + cfg.c1) * (var_x + var_y + cfg.c2)
    return num / den


def ssim_index(x, y, cfg=SsimConfig()):
    """Differentiable mean SSIM (channels and batch averaged)."""
    return ssim_map(x, y, cfg).mean()


def psnr_index(x, y, peak=1.0):
    """Differentiable PSNR in dB with the MSE floored at 1e-12."""
    x, y = _as_tensor4(x), _as_tensor4(y)
    _check_pair(x, y)
    d = x - y
    mse = clamp_min((d * d).mean(), MSE_FLOOR)
    return (log(mse) * -1.0 + 2.0 * math.log(peak)) * (10.0 / math.log(10.0))


def _float64(x):
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def psnr(x, y, peak=1.0):
    """PSNR in dB between two images; identical images give 120 dB."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    a, b = _float64(x), _float64(y)
    _check_pair(a, b)
    mse = max(float(np.mean((a - b) ** 2)), MSE_FLOOR)
    return 10.0 * math.log10(peak**2 / mse)


def ssim(x, y, cfg=SsimConfig()):
    """Mean SSIM in float64."""
    with no_grad(), default_dtype(np.float64):
        return float(ssim_index(_float64(x), _float64(y), cfg).item())


def laplacian(x):
    """Per-channel 4-neighbour Laplacian with zero padding."""
    x = _as_tensor4(x)
    return F.depthwise_conv2d(x, LAPLACIAN.astype(x.dtype), padding=1)


def ps_loss(x, y, cfg=LossConfig()):
    """``(1 - SSIM) / (PSNR + omega)``."""
    return (1.0 - ssim_index(x, y)) / (psnr_index(x, y) + cfg.omega)


def edge_loss(x, y, cfg=LossConfig()):
    """``sqrt(mean((lap(x) - lap(y))**2) + eps**2)``."""
    d = laplacian(x) - laplacian(y)
    return sqrt((d * d).mean() + cfg.epsilon**2)


def loss_components(x, y, cfg=LossConfig()):
    x, y = _as_tensor4(x), _as_tensor4(y)
    _check_pair(x, y)
    if cfg.kind is LossKind.PS:
        main = ps_loss(x, y, cfg)
    else:
        main = tabs(x - y).mean()
    edge = edge_loss(x, y, cfg)
    return {"main": main, "edge": edge, "total": main + cfg.alpha * edge}


def total_loss(x, y, cfg=LossConfig()):
    """``main + alpha * edge`` where main is the PS loss or the mean absolute error."""
    return loss_components(x, y, cfg)["total"]


def rgb_to_ycbcr(x):
    """Full-range BT.601 conversion on ``[..., 3, H, W]`` arrays.

    Luma is written as ``R + 0.587 (G - R) + 0.114 (B - R)`` so gray pixels map
    to exactly themselves.
    """
    wrap = isinstance(x, Tensor)
    a = np.asarray(x.data if wrap else x)
    if a.shape[-3] != 3:
        raise ShapeError(f"expected 3 channels, got shape {a.shape}")
    r, g, b = a[..., 0, :, :], a[..., 1, :, :], a[..., 2, :, :]
    yy = r + 0.587 * (g - r) + 0.114 * (b - r)
    cb = 0.5 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 0.5 + 0.5 * r - 0.418688 * g - 0.081312 * b
    out = np.stack([yy, cb, cr], axis=-3)
    return Tensor(out) if wrap else out


def evaluate_pair(pred, gt, protocol=Protocol.RGB):
    """(PSNR dB, SSIM) after clamping to [0, 1]; ``yluma`` scores the Y channel only."""
    p, g = np.clip(_float64(pred), 0, 1), np.clip(_float64(gt), 0, 1)
    _check_pair(p, g)
    if Protocol(protocol) is Protocol.YLUMA:
        p = rgb_to_ycbcr(p)[..., :1, :, :]
        g = rgb_to_ycbcr(g)[..., :1, :, :]
    return psnr(p, g), ssim(p, g)

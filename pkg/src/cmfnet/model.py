"""Multi-branch restoration network: branch U-Nets, residual attention modules, skip fusion."""

from __future__ import annotations

import dataclasses
import enum
import json

import numpy as np

from . import functional as F
from .attention import AttentionBlock, AttentionKind
from .nn import Conv2d, Module, Parameter, PReLU
from .tensor import ShapeError, sigmoid

BRANCH_ORDER = (AttentionKind.CHANNEL, AttentionKind.PIXEL, AttentionKind.SPATIAL)


class SkipVariant(str, enum.Enum):
    NONE = "none"
    ASC = "asc"
    MSC = "msc"


def parse_branches(spec):
    """``"cps"`` / ``["channel", "pixel"]`` -> canonical ordered tuple of kinds."""
    if isinstance(spec, str):
        items = [AttentionKind.from_letter(ch) for ch in spec]
    else:
        items = [AttentionKind(k) if not isinstance(k, AttentionKind) else k for k in spec]
    if not items:
        raise ValueError("at least one branch is required")
    if len(set(items)) != len(items):
        raise ValueError(f"duplicate branch in {spec!r}")
    return tuple(k for k in BRANCH_ORDER if k in items)


@dataclasses.dataclass(frozen=True)
class CmfnetConfig:
    width: int = 8
    scales: int = 3
    blocks_per_scale: int = 3
    branches: tuple = BRANCH_ORDER
    sc_variant: SkipVariant = SkipVariant.MSC
    msc_theta_init: float = 0.0
    reduction: int = 4
    spatial_kernel: int = 5
    residual_head_conv: bool = False

    def __post_init__(self):
        object.__setattr__(self, "branches", parse_branches(self.branches))
        object.__setattr__(self, "sc_variant", SkipVariant(self.sc_variant))
        if self.width < 1 or self.scales < 1 or self.blocks_per_scale < 1:
            raise ValueError("width, scales and blocks_per_scale must be positive")
        if self.sc_variant is SkipVariant.MSC and len(self.branches) != 3:
            raise ValueError("the mixed skip connection needs all three branches (c, p, s)")
        needs_reduction = {AttentionKind.CHANNEL, AttentionKind.PIXEL} & set(self.branches)
        if needs_reduction and (self.width < self.reduction or self.width % self.reduction):
            raise ValueError(f"width {self.width} is not divisible by reduction ratio {self.reduction}")
        if self.spatial_kernel % 2 == 0:
            raise ValueError("spatial_kernel must be odd")

    @property
    def size_multiple(self):
        """Input H and W must be multiples of this."""
        return 2 ** (self.scales - 1)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["branches"] = [k.value for k in self.branches]
        d["sc_variant"] = self.sc_variant.value
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class BranchUNet(Module):
    """U-Net whose every stage is a stack of attention blocks of one kind.

    Scale ``s`` runs at ``width * 2**s`` channels and ``1/2**s`` resolution.
    Skip connections from encoder to decoder are additive.
    """

    def __init__(self, width, kind, scales=3, blocks=3, reduction=4, spatial_kernel=5, rng=None):
        self.kind = AttentionKind(kind)
        self.scales = scales

        def stage(ch):
            return Sequential(*[AttentionBlock(ch, kind, reduction, spatial_kernel, rng) for _ in range(blocks)])

        chans = [width * 2**s for s in range(scales)]
        self.encoders = [stage(ch) for ch in chans]
        self.downs = [Conv2d(chans[s], chans[s + 1], 1, rng, bias=False) for s in range(scales - 1)]
        self.decoders = [stage(ch) for ch in chans]
        self.ups = [Conv2d(chans[s + 1], chans[s], 3, rng, bias=False) for s in range(scales - 1)]

    def forward(self, x):
        m = 2 ** (self.scales - 1)
        if x.shape[2] % m or x.shape[3] % m:
            raise ShapeError(f"branch input {x.shape[2]}x{x.shape[3]} is not divisible by {m}")
        skips = []
        h = x
        for s, enc in enumerate(self.encoders):
            h = enc(h)
            skips.append(h)
            if s < self.scales - 1:
                h = self.downs[s](F.downsample2x(h))
        h = self.decoders[-1](h)
        for s in reversed(range(self.scales - 1)):
            h = self.ups[s](F.upsample_bilinear2x(h)) + skips[s]
            h = self.decoders[s](h)
        return h


class ResidualAttentionModule(Module):
    """Supervised-attention style module with 3x3 convs and no auxiliary loss.

    Returns ``(features, image)`` where ``image = conv_a(f) + degraded`` and
    ``features = f + conv_c(f) * sigmoid(conv_b(image))``.
    """

    def __init__(self, width, rng=None):
        self.conv_a = Conv2d(width, 3, 3, rng)
        self.conv_b = Conv2d(3, width, 3, rng)
        self.conv_c = Conv2d(width, width, 3, rng)

    def forward(self, f, degraded):
        image = self.conv_a(f) + degraded
        mask = sigmoid(self.conv_b(image))
        return f + self.conv_c(f) * mask, image


def _check_same_shape(*images):
    ref = images[0].shape
    for im in images[1:]:
        if im.shape != ref:
            raise ShapeError(f"skip fusion inputs disagree: {im.shape} vs {ref}")


def msc_weights(theta):
    """Weights ``((1-a)/2, a, (1-a)/2)`` with ``a = sigmoid(theta)``, as floats."""
    a = float(1.0 / (1.0 + np.exp(-np.float64(theta))))
    side = (1.0 - a) / 2.0
    return side, a, side


def msc_forward(i_c, i_p, i_s, theta):
    """Mixed skip connection: learnable convex mix centred on the pixel branch.

    Evaluated as ``i_p + (1-a)/2 * ((i_c - i_p) + (i_s - i_p))``, which is
    algebraically the weighted sum and is exact when all three inputs agree.
    """
    _check_same_shape(i_c, i_p, i_s)
    side = (1.0 - sigmoid(theta)) * 0.5
    return i_p + side * ((i_c - i_p) + (i_s - i_p))


def mean_skip(images):
    """Unweighted mean of branch images, anchored on the first one."""
    _check_same_shape(*images)
    ref = images[0]
    if len(images) == 1:
        return ref
    dev = images[1] - ref
    for im in images[2:]:
        dev = dev + (im - ref)
    return ref + dev * (1.0 / len(images))


def asc_forward(i_c, i_p, i_s):
    """Fixed-weight skip connection: ``(i_c + i_p + i_s) / 3``."""
    return mean_skip([i_c, i_p, i_s])


class CMFNet(Module):
    """Three-branch attention restoration network.

    Each branch: shallow conv-PReLU-conv stem, attention U-Net, residual
    attention module.  The branch images are fused by the configured skip
    connection and added to a 3x3 conv over the concatenated branch features.
    """

    def __init__(self, config=None, seed=0, rng=None):
        self.config = config = config or CmfnetConfig()
        rng = np.random.default_rng(seed) if rng is None else rng
        w = config.width
        self.stems = []
        self.unets = []
        self.rams = []
        for kind in config.branches:
            self.stems.append(Sequential(Conv2d(3, w, 3, rng), PReLU(), Conv2d(w, w, 3, rng)))
            self.unets.append(
                BranchUNet(w, kind, config.scales, config.blocks_per_scale,
                           config.reduction, config.spatial_kernel, rng)
            )
            self.rams.append(ResidualAttentionModule(w, rng))
        self.head = Conv2d(w * len(config.branches), 3, 3, rng)
        if config.residual_head_conv:
            self.residual_conv = Conv2d(3, 3, 3, rng)
        if config.sc_variant is SkipVariant.MSC:
            self.theta = Parameter(np.full(1, config.msc_theta_init))

    def forward_detailed(self, degraded):
        """Run the network and return every intermediate the fusion uses."""
        if degraded.ndim != 4 or degraded.shape[1] != 3:
            raise ShapeError(f"expected [B, 3, H, W] input, got {degraded.shape}")
        m = self.config.size_multiple
        if degraded.shape[2] % m or degraded.shape[3] % m:
            raise ShapeError(f"input {degraded.shape[2]}x{degraded.shape[3]} must be divisible by {m}; pad first")
        feats, images = [], []
        for stem, unet, ram in zip(self.stems, self.unets, self.rams):
            f, im = ram(unet(stem(degraded)), degraded)
            feats.append(f)
            images.append(im)
        variant = self.config.sc_variant
        if variant is SkipVariant.MSC:
            residual = msc_forward(*images, self.theta)
        elif variant is SkipVariant.ASC:
            residual = mean_skip(images)
        else:
            residual = degraded
        if self.config.residual_head_conv:
            residual = self.residual_conv(residual)
        restored = self.head(F.concat_channels(feats)) + residual
        return {"features": feats, "images": images, "residual": residual, "restored": restored}

    def forward(self, degraded):
        return self.forward_detailed(degraded)["restored"]


def param_count(config):
    """Total number of learnable scalars for ``config``."""
    return CMFNet(config).num_parameters()

"""Channel, spatial and pixel attention gates and the residual block that hosts them."""

import enum

from . import functional as F
from .nn import Conv2d, Module, PReLU
from .tensor import relu, sigmoid


class AttentionKind(str, enum.Enum):
    CHANNEL = "channel"
    PIXEL = "pixel"
    SPATIAL = "spatial"

    @property
    def letter(self):
        return self.value[0]

    @classmethod
    def from_letter(cls, letter):
        for kind in cls:
            if kind.letter == letter.lower():
                return kind
        raise ValueError(f"unknown attention kind {letter!r} (expected one of c, p, s)")


def _check_reduction(channels, reduction):
    if channels < reduction or channels % reduction:
        raise ValueError(f"{channels} channels cannot be reduced by ratio {reduction}")


class ChannelAttention(Module):
    """Squeeze by global average pooling, excite through a 1x1 bottleneck.

    The mask has shape ``[B, C, 1, 1]``.
    """

    def __init__(self, channels, reduction=4, rng=None):
        _check_reduction(channels, reduction)
        self.down = Conv2d(channels, channels // reduction, 1, rng)
        self.up = Conv2d(channels // reduction, channels, 1, rng)

    def logits(self, x):
        return self.up(relu(self.down(F.global_avg_pool(x))))

    def mask(self, x):
        return sigmoid(self.logits(x))

    def forward(self, x):
        return x * self.mask(x)


class SpatialAttention(Module):
    """Mask of shape ``[B, 1, H, W]`` from channel-wise mean and max maps."""

    def __init__(self, channels, kernel_size=5, rng=None):
        self.conv = Conv2d(2, 1, kernel_size, rng)

    def logits(self, x):
        return self.conv(F.concat_channels([F.channel_mean(x), F.channel_max(x)]))

    def mask(self, x):
        return sigmoid(self.logits(x))

    def forward(self, x):
        return x * self.mask(x)


class PixelAttention(Module):
    """Full ``[B, C, H, W]`` mask from a 1x1 bottleneck, no pooling."""

    def __init__(self, channels, reduction=4, rng=None):
        _check_reduction(channels, reduction)
        self.down = Conv2d(channels, channels // reduction, 1, rng)
        self.up = Conv2d(channels // reduction, channels, 1, rng)

    def logits(self, x):
        return self.up(relu(self.down(x)))

    def mask(self, x):
        return sigmoid(self.logits(x))

    def forward(self, x):
        return x * self.mask(x)


def make_attention(kind, channels, reduction=4, spatial_kernel=5, rng=None):
    kind = AttentionKind(kind)
    if kind is AttentionKind.CHANNEL:
        return ChannelAttention(channels, reduction, rng)
    if kind is AttentionKind.PIXEL:
        return PixelAttention(channels, reduction, rng)
    return SpatialAttention(channels, spatial_kernel, rng)


class AttentionBlock(Module):
    """``x + attn(conv3x3(prelu(conv3x3(x))))``."""

    def __init__(self, channels, kind, reduction=4, spatial_kernel=5, rng=None):
        self.kind = AttentionKind(kind)
        self.conv1 = Conv2d(channels, channels, 3, rng)
        self.act = PReLU()
        self.conv2 = Conv2d(channels, channels, 3, rng)
        self.attn = make_attention(self.kind, channels, reduction, spatial_kernel, rng)

    def forward(self, x):
        body = self.conv2(self.act(self.conv1(x)))
        return x + self.attn(body)


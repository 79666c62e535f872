"""Image-shaped differentiable operations on ``[B, C, H, W]`` tensors."""

import numpy as np

from . import kernels
from .tensor import ShapeError, Tensor, _record


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation with zero padding.

    ``weight`` is ``[Cout, Cin, kh, kw]`` with odd kernel sizes.  The output
    spatial size is ``(H + 2*padding - kh) // stride + 1``.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and kernel, got {x.shape} and {weight.shape}")
    B, cin, H, W = x.shape
    cout, wcin, kh, kw = weight.shape
    if cin != wcin:
        raise ShapeError(f"conv2d: input has {cin} channels but kernel expects {wcin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel size must be odd, got {kh}x{kw}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {cout} output channels")
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} does not fit input {H}x{W}")

    cols = kernels.im2col(x.data, kh, kw, stride, padding)
    wmat = weight.data.reshape(cout, -1)
    out = np.matmul(wmat, cols).reshape(B, cout, Ho, Wo)
    if bias is not None:
        out += bias.data[:, None, None]

    def backward(g):
        g2 = g.reshape(B, cout, Ho * Wo)
        gx = gw = gb = None
        if x.requires_grad:
            gx = kernels.col2im(np.matmul(wmat.T, g2), x.shape, kh, kw, stride, padding)
        if weight.requires_grad:
            gw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, parents, backward)


def prelu(x, slope):
    """Parametric ReLU; ``slope`` is a scalar-shaped ``(1,)`` or per-channel ``(C,)`` tensor.

    At exactly zero the positive branch is taken, so d/dx = 1 there.
    """
    d = x.data
    if slope.shape == (1,):
        a = slope.data.reshape(())
    elif d.ndim >= 2 and slope.shape == (d.shape[1],):
        a = slope.data.reshape((1, -1) + (1,) * (d.ndim - 2))
    else:
        raise ShapeError(f"prelu: slope shape {slope.shape} incompatible with input {x.shape}")
    pos = d >= 0
    out = np.where(pos, d, a * d)

    def backward(g):
        gx = g * np.where(pos, 1.0, a).astype(d.dtype)
        ga = np.where(pos, 0.0, g * d)
        if slope.shape == (1,):
            ga = np.asarray(ga.sum()).reshape(1)
        else:
            ga = ga.sum(axis=tuple(i for i in range(d.ndim) if i != 1))
        return gx, ga

    return _record(out, (x, slope), backward)


def global_avg_pool(x):
    """Per-plane mean: ``[B, C, H, W] -> [B, C, 1, 1]``."""
    return x.mean(axis=(2, 3), keepdims=True)


def global_max_pool(x):
    """Per-plane maximum; the gradient goes to the first maximum in row-major order."""
    B, C, H, W = x.shape
    return x.reshape(B, C, H * W).amax(axis=2, keepdims=True).reshape(B, C, 1, 1)


def channel_mean(x):
    return x.mean(axis=1, keepdims=True)


def channel_max(x):
    return x.amax(axis=1, keepdims=True)


def downsample2x(x):
    """2x2 average pooling; H and W must be even."""
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"downsample2x needs even spatial size, got {H}x{W}")
    out = x.data.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))

    def backward(g):
        g = np.broadcast_to(g[:, :, :, None, :, None] * 0.25, (B, C, H // 2, 2, W // 2, 2))
        return (g.reshape(B, C, H, W),)

    return _record(out, (x,), backward)


def _interleave(even, odd, axis):
    out = np.stack([even, odd], axis=axis + 1)
    shape = list(even.shape)
    shape[axis] *= 2
    return out.reshape(shape)


def _shift(a, axis, step):
    # neighbour along ``axis`` with edge replication: step=-1 gives a[i-1], step=+1 gives a[i+1]
    n = a.shape[axis]
    idx = np.clip(np.arange(n) + step, 0, n - 1)
    return np.take(a, idx, axis=axis)


def _up1d(a, axis):
    even = 0.75 * a + 0.25 * _shift(a, axis, -1)
    odd = 0.75 * a + 0.25 * _shift(a, axis, 1)
    return _interleave(even, odd, axis)


def _up1d_adjoint(g, axis):
    n = g.shape[axis] // 2
    ge = np.take(g, np.arange(0, 2 * n, 2), axis=axis)
    go = np.take(g, np.arange(1, 2 * n, 2), axis=axis)
    out = 0.75 * (ge + go)
    # the a[i-1] tap of even outputs and the a[i+1] tap of odd outputs
    idx_prev = np.clip(np.arange(n) - 1, 0, n - 1)
    idx_next = np.clip(np.arange(n) + 1, 0, n - 1)
    moved = np.moveaxis(out, axis, 0)
    np.add.at(moved, idx_prev, 0.25 * np.moveaxis(ge, axis, 0))
    np.add.at(moved, idx_next, 0.25 * np.moveaxis(go, axis, 0))
    return out


def upsample_bilinear2x(x):
    """Bilinear 2x upsampling with half-pixel centres (``align_corners=False``)."""
    out = _up1d(_up1d(x.data, 2), 3)

    def backward(g):
        return (_up1d_adjoint(_up1d_adjoint(g, 3), 2),)

    return _record(out, (x,), backward)


def concat_channels(tensors):
    """Concatenate ``[B, Ci, H, W]`` tensors along the channel axis."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat_channels needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors:
        if t.ndim != 4 or (t.shape[0], t.shape[2], t.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError(f"concat_channels: shape {t.shape} does not match {ref}")
    if len(tensors) == 1:
        return tensors[0]
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=1)
    return _record(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=1)))


def depthwise_conv2d(x, kernel, padding=0):
    """Apply one fixed 2-D ``kernel`` to every channel independently."""
    B, C, H, W = x.shape
    k = kernel if isinstance(kernel, Tensor) else Tensor(np.asarray(kernel, dtype=x.dtype))
    kh, kw = k.shape[-2:]
    y = conv2d(x.reshape(B * C, 1, H, W), k.reshape(1, 1, kh, kw), padding=padding)
    return y.reshape(B, C, y.shape[2], y.shape[3])

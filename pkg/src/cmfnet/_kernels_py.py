"""Pure-numpy fallback for the convolution gather/scatter kernels.

Both functions work on channels-first batches and fold zero padding into the
gather so callers never materialize a padded copy themselves.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw, stride, pad):
    """Unfold ``x[B, C, H, W]`` into ``cols[B, C*kh*kw, Ho*Wo]``."""
    B, C, H, W = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, : (Ho - 1) * stride + 1 : stride, : (Wo - 1) * stride + 1 : stride]
    # [B, C, Ho, Wo, kh, kw] -> [B, C, kh, kw, Ho, Wo]
    cols = win.transpose(0, 1, 4, 5, 2, 3)
    return np.ascontiguousarray(cols).reshape(B, C * kh * kw, Ho * Wo)


def col2im(cols, shape, kh, kw, stride, pad):
    """Adjoint of :func:`im2col`: scatter-add columns back into ``shape``."""
    B, C, H, W = shape
    Hp, Wp = H + 2 * pad, W + 2 * pad
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    cols = cols.reshape(B, C, kh, kw, Ho, Wo)
    out = np.zeros((B, C, Hp, Wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad : pad + H, pad : pad + W]
    return np.ascontiguousarray(out)

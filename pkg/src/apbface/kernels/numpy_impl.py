"""Pure-numpy implementations of the hot convolution kernels.

Reference path used when numba is unavailable or APBFACE_BACKEND=numpy.
Column layout: cols[b, (c*kh + i)*kw + j, oy*wo + ox] = x[b, c, oy*sh + i - ph, ox*sw + j - pw]
(zero where the source index falls outside the image).
"""

import numpy as np


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col(x, kh, kw, sh, sw, ph, pw):
    """Unfold NCHW input into (B, C*kh*kw, Ho*Wo) patch columns."""
    b, c, h, w = x.shape
    ho = conv_out_size(h, kh, sh, ph)
    wo = conv_out_size(w, kw, sw, pw)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((b, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw]
    return cols.reshape(b, c * kh * kw, ho * wo)


def col2im(cols, x_shape, kh, kw, sh, sw, ph, pw):
    """Fold (B, C*kh*kw, Ho*Wo) columns back into NCHW, summing overlaps."""
    b, c, h, w = x_shape
    ho = conv_out_size(h, kh, sh, ph)
    wo = conv_out_size(w, kw, sw, pw)
    ncols = cols.reshape(b, c, kh, kw, ho, wo)
    xp = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += ncols[:, :, i, j]
    return xp[:, :, ph : ph + h, pw : pw + w]

"""Numba-jitted convolution kernels (same contracts as numpy_impl).

Single-threaded on purpose: training determinism requires a fixed reduction
order, so no prange here. fastmath stays off to keep results close to the
numpy path.
"""

import numpy as np
from numba import njit

from .numpy_impl import conv_out_size


@njit(cache=True)
def _im2col_jit(x, cols, kh, kw, sh, sw, ph, pw, ho, wo):
    b, c, h, w = x.shape
    for n in range(b):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ci * kh + i) * kw + j
                    for oy in range(ho):
                        iy = oy * sh + i - ph
                        if iy < 0 or iy >= h:
                            continue
                        base = oy * wo
                        for ox in range(wo):
                            ix = ox * sw + j - pw
                            if 0 <= ix < w:
                                cols[n, row, base + ox] = x[n, ci, iy, ix]


@njit(cache=True)
def _col2im_jit(cols, x, kh, kw, sh, sw, ph, pw, ho, wo):
    b, c, h, w = x.shape
    for n in range(b):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ci * kh + i) * kw + j
                    for oy in range(ho):
                        iy = oy * sh + i - ph
                        if iy < 0 or iy >= h:
                            continue
                        base = oy * wo
                        for ox in range(wo):
                            ix = ox * sw + j - pw
                            if 0 <= ix < w:
                                x[n, ci, iy, ix] += cols[n, row, base + ox]


def im2col(x, kh, kw, sh, sw, ph, pw):
    b, c, h, w = x.shape
    ho = conv_out_size(h, kh, sh, ph)
    wo = conv_out_size(w, kw, sw, pw)
    cols = np.zeros((b, c * kh * kw, ho * wo), dtype=x.dtype)
    _im2col_jit(np.ascontiguousarray(x), cols, kh, kw, sh, sw, ph, pw, ho, wo)
    return cols


def col2im(cols, x_shape, kh, kw, sh, sw, ph, pw):
    b, c, h, w = x_shape
    ho = conv_out_size(h, kh, sh, ph)
    wo = conv_out_size(w, kw, sw, pw)
    x = np.zeros(x_shape, dtype=cols.dtype)
    _col2im_jit(np.ascontiguousarray(cols), x, kh, kw, sh, sw, ph, pw, ho, wo)
    return x

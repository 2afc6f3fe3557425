"""Central finite-difference gradient verification utilities."""

import numpy as np


def numeric_gradients(loss_fn, params, h=1e-6):
    """Central-difference gradients of ``loss_fn()`` w.r.t. every entry of
    ``params`` (dict of live arrays, mutated in place and restored).

    ``loss_fn`` must be a pure function of the current parameter values.
    """
    out = {}
    for key, p in params.items():
        grad = np.zeros_like(p, dtype=np.float64)
        flat = p.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            step = h * max(1.0, abs(float(orig)))
            flat[i] = orig + step
            f_plus = loss_fn()
            flat[i] = orig - step
            f_minus = loss_fn()
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2 * step)
        out[key] = grad
    return out


def max_relative_error(analytic, numeric, floor=1e-8):
    """Worst |a-n| relative to the gradient field's infinity norm.

    Elementwise relative error is meaningless on near-zero entries (central
    differences bottom out at eps*|f|/h), so the denominator is the largest
    gradient magnitude across both dicts.
    """
    scale = floor
    for key, a in analytic.items():
        scale = max(scale, float(np.abs(a).max(initial=0.0)), float(np.abs(numeric[key]).max(initial=0.0)))
    worst = 0.0
    for key, a in analytic.items():
        worst = max(worst, float(np.max(np.abs(a - numeric[key]))) / scale)
    return worst

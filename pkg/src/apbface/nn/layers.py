"""Layers with explicit forward/backward passes.

Conventions: NCHW image tensors, (B, features) for linear layers. Each layer
caches whatever its backward needs during forward; backward returns the input
gradient and accumulates parameter gradients into `grads`.
"""

import numpy as np

from ..kernels import im2col, col2im, conv_out_size


class Module:
    """Base class: a tree of submodules owning named parameters and buffers."""

    def __init__(self):
        self._params = {}
        self._grads = {}
        self._buffers = {}
        self._children = {}

    def add_param(self, name, value):
        self._params[name] = value
        self._grads[name] = np.zeros_like(value)

    def add_buffer(self, name, value):
        self._buffers[name] = value

    def add_child(self, name, module):
        self._children[name] = module
        return module

    def params(self):
        """Flat dict of dotted-name -> parameter array (live references)."""
        out = dict(self._params)
        for cname, child in self._children.items():
            for pname, p in child.params().items():
                out[f"{cname}.{pname}"] = p
        return out

    def grads(self):
        out = dict(self._grads)
        for cname, child in self._children.items():
            for pname, g in child.grads().items():
                out[f"{cname}.{pname}"] = g
        return out

    def buffers(self):
        out = dict(self._buffers)
        for cname, child in self._children.items():
            for bname, b in child.buffers().items():
                out[f"{cname}.{bname}"] = b
        return out

    def set_param(self, name, value):
        head, _, rest = name.partition(".")
        if rest:
            self._children[head].set_param(rest, value)
        else:
            self._params[name][...] = value

    def set_buffer(self, name, value):
        head, _, rest = name.partition(".")
        if rest:
            self._children[head].set_buffer(rest, value)
        else:
            self._buffers[name][...] = value

    def zero_grads(self):
        for g in self._grads.values():
            g[...] = 0
        for child in self._children.values():
            child.zero_grads()

    def state(self):
        """Parameters plus buffers, for checkpointing."""
        out = {f"param.{k}": v for k, v in self.params().items()}
        out.update({f"buffer.{k}": v for k, v in self.buffers().items()})
        return out

    def load_state(self, state):
        for key, value in state.items():
            kind, _, name = key.partition(".")
            if kind == "param":
                self.set_param(name, value)
            elif kind == "buffer":
                self.set_buffer(name, value)
            else:
                raise ValueError(f"unknown state entry {key!r}")

    def n_params(self):
        return sum(p.size for p in self.params().values())

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def __call__(self, x, training=False):
        return self.forward(x, training=training)


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        for i, layer in enumerate(layers):
            self.add_child(str(i), layer)
        self.layers = list(layers)

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype=np.float32, w_std=0.02):
        super().__init__()
        self.add_param("weight", rng.normal(0.0, w_std, (n_in, n_out)).astype(dtype))
        self.add_param("bias", np.zeros(n_out, dtype=dtype))

    def forward(self, x, training=False):
        self._x = x
        return x @ self._params["weight"] + self._params["bias"]

    def backward(self, dy):
        self._grads["weight"] += self._x.T @ dy
        self._grads["bias"] += dy.sum(axis=0)
        return dy @ self._params["weight"].T


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, pad=0, rng=None, dtype=np.float32, w_std=0.02):
        super().__init__()
        self.kh, self.kw = kernel if isinstance(kernel, tuple) else (kernel, kernel)
        self.sh, self.sw = stride if isinstance(stride, tuple) else (stride, stride)
        self.ph, self.pw = pad if isinstance(pad, tuple) else (pad, pad)
        self.c_in, self.c_out = c_in, c_out
        self.add_param("weight", rng.normal(0.0, w_std, (c_out, c_in, self.kh, self.kw)).astype(dtype))
        self.add_param("bias", np.zeros(c_out, dtype=dtype))

    def forward(self, x, training=False):
        b, c, h, w = x.shape
        if c != self.c_in:
            raise ValueError(f"conv expected {self.c_in} input channels, got {c}")
        ho = conv_out_size(h, self.kh, self.sh, self.ph)
        wo = conv_out_size(w, self.kw, self.sw, self.pw)
        cols = im2col(x, self.kh, self.kw, self.sh, self.sw, self.ph, self.pw)
        wm = self._params["weight"].reshape(self.c_out, -1)
        y = np.matmul(wm, cols) + self._params["bias"].reshape(1, -1, 1)
        self._cols, self._x_shape = cols, x.shape
        return y.reshape(b, self.c_out, ho, wo)

    def backward(self, dy):
        b = dy.shape[0]
        dyf = dy.reshape(b, self.c_out, -1)
        wm = self._params["weight"].reshape(self.c_out, -1)
        dw = np.matmul(dyf, self._cols.transpose(0, 2, 1)).sum(axis=0)
        self._grads["weight"] += dw.reshape(self._params["weight"].shape)
        self._grads["bias"] += dyf.sum(axis=(0, 2))
        dcols = np.matmul(wm.T, dyf)
        return col2im(dcols, self._x_shape, self.kh, self.kw, self.sh, self.sw, self.ph, self.pw)


class ConvTranspose2d(Module):
    """Fractionally-strided conv; output size (H-1)*s - 2p + k."""

    def __init__(self, c_in, c_out, kernel, stride=1, pad=0, rng=None, dtype=np.float32, w_std=0.02):
        super().__init__()
        self.kh, self.kw = kernel if isinstance(kernel, tuple) else (kernel, kernel)
        self.sh, self.sw = stride if isinstance(stride, tuple) else (stride, stride)
        self.ph, self.pw = pad if isinstance(pad, tuple) else (pad, pad)
        self.c_in, self.c_out = c_in, c_out
        self.add_param("weight", rng.normal(0.0, w_std, (c_in, c_out, self.kh, self.kw)).astype(dtype))
        self.add_param("bias", np.zeros(c_out, dtype=dtype))

    def forward(self, x, training=False):
        b, c, h, w = x.shape
        if c != self.c_in:
            raise ValueError(f"conv_transpose expected {self.c_in} input channels, got {c}")
        ho = (h - 1) * self.sh - 2 * self.ph + self.kh
        wo = (w - 1) * self.sw - 2 * self.pw + self.kw
        xf = x.reshape(b, c, h * w)
        wm = self._params["weight"].reshape(self.c_in, -1)
        cols = np.matmul(wm.T, xf)
        y = col2im(cols, (b, self.c_out, ho, wo), self.kh, self.kw, self.sh, self.sw, self.ph, self.pw)
        self._xf, self._in_shape = xf, x.shape
        return y + self._params["bias"].reshape(1, -1, 1, 1)

    def backward(self, dy):
        b = dy.shape[0]
        dcols = im2col(dy, self.kh, self.kw, self.sh, self.sw, self.ph, self.pw)
        wm = self._params["weight"].reshape(self.c_in, -1)
        dw = np.matmul(self._xf, dcols.transpose(0, 2, 1)).sum(axis=0)
        self._grads["weight"] += dw.reshape(self._params["weight"].shape)
        self._grads["bias"] += dy.sum(axis=(0, 2, 3))
        dx = np.matmul(wm, dcols)
        return dx.reshape(self._in_shape)


class BatchNorm2d(Module):
    """Per-batch statistics in training, stored running statistics at inference."""

    def __init__(self, c, rng, dtype=np.float32, eps=1e-5, momentum=0.1, g_std=0.02):
        super().__init__()
        self.eps, self.momentum = eps, momentum
        self.add_param("gamma", rng.normal(1.0, g_std, c).astype(dtype))
        self.add_param("beta", np.zeros(c, dtype=dtype))
        self.add_buffer("running_mean", np.zeros(c, dtype=dtype))
        self.add_buffer("running_var", np.ones(c, dtype=dtype))

    def forward(self, x, training=False):
        gamma = self._params["gamma"].reshape(1, -1, 1, 1)
        beta = self._params["beta"].reshape(1, -1, 1, 1)
        if training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            n = x.shape[0] * x.shape[2] * x.shape[3]
            mom = self.momentum
            self._buffers["running_mean"][...] = (1 - mom) * self._buffers["running_mean"] + mom * mean
            unbiased = var * (n / max(n - 1, 1))
            self._buffers["running_var"][...] = (1 - mom) * self._buffers["running_var"] + mom * unbiased
            invstd = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean.reshape(1, -1, 1, 1)) * invstd.reshape(1, -1, 1, 1)
            self._xhat, self._invstd, self._n = xhat, invstd, n
            return gamma * xhat + beta
        mean = self._buffers["running_mean"].reshape(1, -1, 1, 1)
        var = self._buffers["running_var"].reshape(1, -1, 1, 1)
        return gamma * (x - mean) / np.sqrt(var + self.eps) + beta

    def backward(self, dy):
        gamma = self._params["gamma"].reshape(1, -1, 1, 1)
        xhat, invstd, n = self._xhat, self._invstd, self._n
        self._grads["gamma"] += (dy * xhat).sum(axis=(0, 2, 3))
        self._grads["beta"] += dy.sum(axis=(0, 2, 3))
        dxhat = dy * gamma
        sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        return (invstd.reshape(1, -1, 1, 1) / n) * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)


class LeakyReLU(Module):
    def __init__(self, slope=0.2):
        super().__init__()
        self.slope = slope

    def forward(self, x, training=False):
        self._neg = x < 0
        return np.where(self._neg, self.slope * x, x)

    def backward(self, dy):
        return np.where(self._neg, self.slope * dy, dy)


class ReLU(LeakyReLU):
    def __init__(self):
        super().__init__(slope=0.0)


class Tanh(Module):
    def forward(self, x, training=False):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y * self._y)

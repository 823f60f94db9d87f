"""Building-block layers for a small NHWC convolutional network engine.

Every layer follows the same minimal protocol: ``forward(x, train, update_stats)``
caches whatever the backward pass needs, ``backward(dy)`` returns the input
gradient and accumulates parameter gradients in place.  Parameters and their
gradients are plain numpy arrays so an optimizer can update them directly.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor shapes disagree with a layer's contract."""


class Layer:
    name = "layer"
    trainable: tuple = ()
    buffers: tuple = ()

    def forward(self, x, train=False, update_stats=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def param_items(self):
        for pname in self.trainable:
            yield pname, getattr(self, pname), getattr(self, "d" + pname)

    def state_items(self):
        for pname in self.trainable + self.buffers:
            yield pname, getattr(self, pname)

    def zero_grads(self):
        for pname in self.trainable:
            getattr(self, "d" + pname)[...] = 0.0

    def cast_(self, dtype):
        for pname in self.trainable:
            setattr(self, pname, getattr(self, pname).astype(dtype))
            setattr(self, "d" + pname, np.zeros_like(getattr(self, pname)))
        for bname in self.buffers:
            setattr(self, bname, getattr(self, bname).astype(dtype))
        self._cache = None


def _require_even_spatial(x):
    if x.ndim != 4:
        raise ShapeError(f"expected NHWC batch, got shape {x.shape}")
    if x.shape[1] % 2 or x.shape[2] % 2:
        raise ShapeError(f"downsampling needs even spatial dims, got {x.shape[1:3]}")


class Conv2d(Layer):
    """Cross-correlation with weights laid out (kh, kw, c_in, c_out)."""

    name = "conv"
    trainable = ("w", "b")

    def __init__(self, w, b, stride=1, pad=0):
        self.w = w
        self.b = b
        self.dw = np.zeros_like(w)
        self.db = np.zeros_like(b)
        self.stride = int(stride)
        self.pad = int(pad)
        self._cache = None

    def forward(self, x, train=False, update_stats=None):
        if x.ndim != 4:
            raise ShapeError(f"expected NHWC batch, got shape {x.shape}")
        n, h, wd, cin = x.shape
        kh, kw, cin_w, cout = self.w.shape
        if cin != cin_w:
            raise ShapeError(f"channel mismatch: input {cin}, weights {cin_w}")
        p, s = self.pad, self.stride
        if (h + 2 * p - kh) % s or (wd + 2 * p - kw) % s:
            raise ShapeError(f"spatial dims {h}x{wd} do not tile with stride {s}")
        oh = (h + 2 * p - kh) // s + 1
        ow = (wd + 2 * p - kw) // s + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"input {h}x{wd} too small for kernel {kh}x{kw}")
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        out = np.empty((n, oh, ow, cout), dtype=x.dtype)
        out[...] = self.b
        for i in range(kh):
            for j in range(kw):
                xs = xp[:, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s, :]
                out += np.tensordot(xs, self.w[i, j], axes=([3], [0]))
        self._cache = (x.shape, xp, oh, ow)
        return out

    def backward(self, dy):
        xshape, xp, oh, ow = self._cache
        _, h, wd, _ = xshape
        kh, kw, _, _ = self.w.shape
        p, s = self.pad, self.stride
        self.db += dy.sum(axis=(0, 1, 2))
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                rows = slice(i, i + s * (oh - 1) + 1, s)
                cols = slice(j, j + s * (ow - 1) + 1, s)
                self.dw[i, j] += np.tensordot(xp[:, rows, cols, :], dy, axes=([0, 1, 2], [0, 1, 2]))
                dxp[:, rows, cols, :] += np.tensordot(dy, self.w[i, j], axes=([3], [1]))
        return dxp[:, p : p + h, p : p + wd, :] if p else dxp


class BatchNorm(Layer):
    """Per-channel batch normalization over the batch and spatial axes."""

    name = "bn"
    trainable = ("gamma", "beta")
    buffers = ("running_mean", "running_var")

    def __init__(self, channels, dtype=np.float32, eps=1e-5, momentum=0.9):
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.eps = eps
        self.momentum = momentum
        self._cache = None

    def forward(self, x, train=False, update_stats=None):
        if update_stats is None:
            update_stats = train
        axes = tuple(range(x.ndim - 1))
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)  # biased, matches the normalization below
            if update_stats:
                m = self.momentum
                self.running_mean[...] = m * self.running_mean + (1.0 - m) * mean
                self.running_var[...] = m * self.running_var + (1.0 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + x.dtype.type(self.eps))
        xhat = (x - mean) * inv
        self._cache = (xhat, inv, train, axes)
        return self.gamma * xhat + self.beta

    def backward(self, dy):
        xhat, inv, train, axes = self._cache
        self.dgamma += (dy * xhat).sum(axis=axes)
        self.dbeta += dy.sum(axis=axes)
        dxhat = dy * self.gamma
        if not train:
            return dxhat * inv
        return inv * (
            dxhat
            - dxhat.mean(axis=axes)
            - xhat * (dxhat * xhat).mean(axis=axes)
        )


class ReLU(Layer):
    name = "relu"

    def forward(self, x, train=False, update_stats=None):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dy):
        return dy * self._cache


class Subsample(Layer):
    """Keeps the top-left element of every 2x2 block."""

    name = "pool"

    def forward(self, x, train=False, update_stats=None):
        _require_even_spatial(x)
        self._cache = x.shape
        return x[:, ::2, ::2, :].copy()

    def backward(self, dy):
        dx = np.zeros(self._cache, dtype=dy.dtype)
        dx[:, ::2, ::2, :] = dy
        return dx


class MaxPool(Layer):
    name = "pool"

    def forward(self, x, train=False, update_stats=None):
        _require_even_spatial(x)
        n, h, w, c = x.shape
        blocks = (
            x.reshape(n, h // 2, 2, w // 2, 2, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(n, h // 2, w // 2, 4, c)
        )
        # argmax picks the first maximum, i.e. row-major within each 2x2 block
        idx = blocks.argmax(axis=3)
        self._cache = (x.shape, idx)
        return np.take_along_axis(blocks, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]

    def backward(self, dy):
        shape, idx = self._cache
        n, h, w, c = shape
        dblocks = np.zeros((n, h // 2, w // 2, 4, c), dtype=dy.dtype)
        np.put_along_axis(dblocks, idx[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
        return (
            dblocks.reshape(n, h // 2, w // 2, 2, 2, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(n, h, w, c)
        )


class AvgPool(Layer):
    name = "pool"

    def forward(self, x, train=False, update_stats=None):
        _require_even_spatial(x)
        n, h, w, c = x.shape
        self._cache = x.shape
        return x.reshape(n, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

    def backward(self, dy):
        n, h, w, c = self._cache
        quarter = dy * dy.dtype.type(0.25)
        blocks = np.broadcast_to(
            quarter[:, :, None, :, None, :], (n, h // 2, 2, w // 2, 2, c)
        )
        return blocks.reshape(n, h, w, c)


class GlobalAvgPool(Layer):
    name = "gap"

    def forward(self, x, train=False, update_stats=None):
        if x.ndim != 4:
            raise ShapeError(f"expected NHWC batch, got shape {x.shape}")
        self._cache = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dy):
        n, h, w, c = self._cache
        scaled = dy * dy.dtype.type(1.0 / (h * w))
        return np.broadcast_to(scaled[:, None, None, :], (n, h, w, c)).copy()


class Linear(Layer):
    name = "linear"
    trainable = ("w", "b")

    def __init__(self, w, b):
        self.w = w
        self.b = b
        self.dw = np.zeros_like(w)
        self.db = np.zeros_like(b)
        self._cache = None

    def forward(self, x, train=False, update_stats=None):
        if x.ndim != 2 or x.shape[1] != self.w.shape[0]:
            raise ShapeError(f"expected (n, {self.w.shape[0]}) input, got {x.shape}")
        self._cache = x
        return x @ self.w + self.b

    def backward(self, dy):
        x = self._cache
        self.dw += x.T @ dy
        self.db += dy.sum(axis=0)
        return dy @ self.w.T

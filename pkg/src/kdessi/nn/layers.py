"""Parameterised layers with cached forward state for backprop.

A layer owns ``params`` (trainable), ``grads`` (same keys) and ``buffers``
(non-trainable state such as running statistics).  ``forward`` stores what
``backward`` needs, so each layer instance supports one in-flight pass.
"""
from __future__ import annotations

import numpy as np

from . import functional as F


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


class Conv1d(Layer):
    def __init__(self, c_in, c_out, kernel, stride=1, padding=0, bias=True, rng=None, dtype=np.float32):
        super().__init__()
        self.stride = stride
        self.padding = padding
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = c_in * kernel
        self.params["weight"] = (rng.standard_normal((c_out, c_in, kernel)) * np.sqrt(2.0 / fan_in)).astype(dtype)
        if bias:
            self.params["bias"] = np.zeros(c_out, dtype=dtype)
        self.zero_grad()
        self._cache = None

    def forward(self, x, training=False):
        out, cache = F.conv1d(x, self.params["weight"], self.params.get("bias"), self.stride, self.padding)
        self._cache = cache
        return out

    def backward(self, grad):
        dx, dw, db = F.conv1d_backward(grad, self._cache)
        self.grads["weight"] += dw
        if db is not None:
            self.grads["bias"] += db
        return dx


class BatchNorm1d(Layer):
    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)
        self.zero_grad()
        self._cache = None
        self._training = False

    def forward(self, x, training=False):
        self._training = training
        p = self.params
        if training:
            out, mean, var, self._cache = F.batchnorm(x, p["gamma"], p["beta"], self.eps)
            n = x.shape[0] * x.shape[2]
            unbiased = var * (n / max(n - 1, 1))
            m = self.momentum
            self.buffers["running_mean"] = ((1 - m) * self.buffers["running_mean"] + m * mean).astype(x.dtype)
            self.buffers["running_var"] = ((1 - m) * self.buffers["running_var"] + m * unbiased).astype(x.dtype)
            return out
        out, scale = F.batchnorm_inference(
            x, p["gamma"], p["beta"], self.buffers["running_mean"], self.buffers["running_var"], self.eps
        )
        self._cache = (x, scale)
        return out

    def backward(self, grad):
        if not self._training:
            # eval mode is an affine map per channel
            x, scale = self._cache
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            xhat = (x - rm[:, None]) / np.sqrt(rv + self.eps)[:, None]
            self.grads["gamma"] += (grad * xhat).sum(axis=(0, 2))
            self.grads["beta"] += grad.sum(axis=(0, 2))
            return grad * scale[:, None]
        dx, dgamma, dbeta = F.batchnorm_backward(grad, self._cache)
        self.grads["gamma"] += dgamma
        self.grads["beta"] += dbeta
        return dx


class ReLU(Layer):
    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x, training=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class GlobalAvgPool(Layer):
    """Mean over the length axis: ``(B, C, L) -> (B, C)``."""

    def __init__(self):
        super().__init__()
        self._length = None

    def forward(self, x, training=False):
        self._length = x.shape[2]
        return x.mean(axis=2)

    def backward(self, grad):
        return np.repeat(grad[:, :, None] / self._length, self._length, axis=2)


class Linear(Layer):
    def __init__(self, n_in, n_out, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = (rng.standard_normal((n_out, n_in)) * np.sqrt(1.0 / n_in)).astype(dtype)
        self.params["bias"] = np.zeros(n_out, dtype=dtype)
        self.zero_grad()
        self._x = None

    def forward(self, x, training=False):
        self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, grad):
        self.grads["weight"] += grad.T @ self._x
        self.grads["bias"] += grad.sum(axis=0)
        return grad @ self.params["weight"]

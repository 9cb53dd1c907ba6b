"""Stateless forward/backward kernels.

Activations are channels-first ``(batch, channels, length)`` internally so
that per-channel broadcasts and tap copies run along the long length axis.
Every ``*_backward`` function takes the upstream gradient plus whatever the
matching forward returned as cache.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError

LOG_CLAMP = 1e-12


# --------------------------------------------------------------------------
# convolution


def conv1d_output_length(length: int, kernel: int, stride: int, padding: int) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def _im2col(xp, kernel, stride, l_out):
    """``(B, C, L)`` -> ``(B, C * kernel, l_out)`` with row index ``c * kernel + j``."""
    span = (l_out - 1) * stride + 1
    cols = np.stack([xp[:, :, j : j + span : stride] for j in range(kernel)], axis=2)
    return cols.reshape(xp.shape[0], -1, l_out)


def conv1d(x, weight, bias=None, stride=1, padding=0):
    """1D cross-correlation.

    Args:
        x: ``(B, C_in, L)`` input.
        weight: ``(C_out, C_in, K)`` kernel.
        bias: ``(C_out,)`` or None.
        stride: hop between output positions.
        padding: zeros added on both ends of the length axis.

    Returns:
        ``(out, cache)`` with ``out`` shaped ``(B, C_out, L_out)``.
    """
    if x.ndim != 3 or weight.ndim != 3:
        raise InvalidInputError("conv1d expects x (B, C_in, L) and weight (C_out, C_in, K)")
    batch, c_in, length = x.shape
    c_out, w_in, kernel = weight.shape
    if w_in != c_in:
        raise InvalidInputError(f"conv1d channel mismatch: input has {c_in}, weight expects {w_in}")
    if bias is not None and bias.shape != (c_out,):
        raise InvalidInputError("conv1d bias must have shape (C_out,)")
    if stride < 1 or padding < 0:
        raise InvalidInputError("conv1d needs stride >= 1 and padding >= 0")
    l_out = conv1d_output_length(length, kernel, stride, padding)
    if l_out < 1:
        raise InvalidInputError("conv1d kernel is longer than the padded input")

    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
    cols = _im2col(xp, kernel, stride, l_out)
    out = weight.reshape(c_out, c_in * kernel) @ cols
    if bias is not None:
        out += bias[:, None]
    cache = (cols, weight, x.shape, stride, padding, bias is not None)
    return out, cache


def conv1d_backward(grad_out, cache):
    """Returns ``(dx, dweight, dbias)``; ``dbias`` is None for bias-free convs."""
    cols, weight, x_shape, stride, padding, has_bias = cache
    batch, c_in, length = x_shape
    c_out, _, kernel = weight.shape
    l_out = grad_out.shape[2]

    dweight = np.tensordot(grad_out, cols, axes=([0, 2], [0, 2])).reshape(weight.shape)
    dbias = grad_out.sum(axis=(0, 2)) if has_bias else None

    # dx is the full correlation of the stride-dilated gradient with the flipped kernel
    if stride > 1:
        dilated = np.zeros((batch, c_out, (l_out - 1) * stride + 1), dtype=grad_out.dtype)
        dilated[:, :, ::stride] = grad_out
    else:
        dilated = grad_out
    gp = np.pad(dilated, ((0, 0), (0, 0), (kernel - 1, kernel - 1)))
    n_full = dilated.shape[2] + kernel - 1
    w_flip = weight[:, :, ::-1].transpose(1, 0, 2).reshape(c_in, c_out * kernel)
    full = w_flip @ _im2col(gp, kernel, 1, n_full)

    padded_len = length + 2 * padding
    if n_full < padded_len:
        # trailing padded positions never reached by a window
        full = np.pad(full, ((0, 0), (0, 0), (0, padded_len - n_full)))
    dx = full[:, :, padding : padding + length]
    return np.ascontiguousarray(dx), dweight, dbias


# --------------------------------------------------------------------------
# batch normalization (per channel, statistics over batch and length)


def batchnorm(x, gamma, beta, eps=1e-5):
    """Training-mode batch norm; returns ``(out, mean, var, cache)``."""
    n = x.shape[0] * x.shape[2]
    mean = x.sum(axis=2).sum(axis=0) / n
    xc = x - mean[:, None]
    var = (xc * xc).sum(axis=2).sum(axis=0) / n
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = xc * inv_std[:, None]
    out = xhat * gamma[:, None] + beta[:, None]
    return out, mean, var, (xhat, inv_std, gamma)


def batchnorm_backward(grad_out, cache):
    xhat, inv_std, gamma = cache
    n = grad_out.shape[0] * grad_out.shape[2]
    dgamma = (grad_out * xhat).sum(axis=2).sum(axis=0)
    dbeta = grad_out.sum(axis=2).sum(axis=0)
    # sum(dxhat) = gamma*dbeta and sum(dxhat*xhat) = gamma*dgamma
    dx = (grad_out - xhat * (dgamma / n)[:, None] - (dbeta / n)[:, None]) * (gamma * inv_std)[:, None]
    return dx, dgamma, dbeta


def batchnorm_inference(x, gamma, beta, running_mean, running_var, eps=1e-5):
    """Eval-mode batch norm; returns ``(out, scale)`` where ``scale`` is the per-channel gain."""
    scale = (gamma / np.sqrt(running_var + eps)).astype(x.dtype)
    shift = (beta - running_mean * scale).astype(x.dtype)
    return x * scale[:, None] + shift[:, None], scale


# --------------------------------------------------------------------------
# softmax family


def t_softmax(z, temperature=1.0, axis=-1):
    """Temperature softmax ``exp(z_i/T) / sum_j exp(z_j/T)``."""
    if not temperature > 0:
        raise InvalidInputError(f"temperature must be positive, got {temperature}")
    z = np.asarray(z, dtype=np.result_type(z, np.float32))
    s = z / temperature
    s = s - s.max(axis=axis, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=axis, keepdims=True)


def t_softmax_backward(grad_p, p, temperature=1.0, axis=-1):
    """Vector-Jacobian product of :func:`t_softmax` given its output ``p``."""
    dot = (grad_p * p).sum(axis=axis, keepdims=True)
    return p * (grad_p - dot) / temperature


def log_softmax(z, temperature=1.0, axis=-1):
    if not temperature > 0:
        raise InvalidInputError(f"temperature must be positive, got {temperature}")
    s = np.asarray(z) / temperature
    s = s - s.max(axis=axis, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=axis, keepdims=True))


def _check_labels(labels, n_classes):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InvalidInputError(f"label out of range [0, {n_classes})")
    return labels.astype(np.int64)


def cross_entropy(probs, label):
    """``-log p[label]`` with the probability clamped at 1e-12.

    Works on a single distribution (scalar label) or a batch (label vector);
    batch results are per-sample losses.
    """
    probs = np.asarray(probs)
    labels = _check_labels(label, probs.shape[-1])
    picked = np.take_along_axis(probs, labels[..., None], axis=-1)[..., 0]
    return -np.log(np.maximum(picked, LOG_CLAMP))


def cross_entropy_backward(probs, label):
    """Gradient of :func:`cross_entropy` with respect to ``probs``."""
    probs = np.asarray(probs)
    labels = _check_labels(label, probs.shape[-1])
    grad = np.zeros_like(probs)
    picked = np.take_along_axis(probs, labels[..., None], axis=-1)
    np.put_along_axis(
        grad, labels[..., None], np.where(picked > LOG_CLAMP, -1.0 / np.maximum(picked, LOG_CLAMP), 0.0), axis=-1
    )
    return grad


def cross_entropy_with_logits(logits, labels):
    """Mean softmax cross-entropy over a batch plus its gradient on the logits."""
    labels = _check_labels(labels, logits.shape[-1])
    logp = log_softmax(logits)
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def kl_divergence(p, q):
    """``sum_i p_i log(p_i / q_i)`` with ``0 log 0 = 0`` and ``q`` clamped at 1e-12."""
    p = np.asarray(p)
    q = np.asarray(q)
    if p.shape != q.shape:
        raise InvalidInputError(f"kl_divergence shape mismatch: {p.shape} vs {q.shape}")
    safe_p = np.where(p > 0, p, 1.0)
    terms = np.where(p > 0, p * (np.log(safe_p) - np.log(np.maximum(q, LOG_CLAMP))), 0.0)
    return terms.sum(axis=-1)


def kl_divergence_backward(p, q):
    """Returns ``(dp, dq)`` for an upstream gradient of one per distribution."""
    p = np.asarray(p)
    q = np.asarray(q)
    qc = np.maximum(q, LOG_CLAMP)
    safe_p = np.where(p > 0, p, 1.0)
    dp = np.where(p > 0, np.log(safe_p) - np.log(qc) + 1.0, 0.0)
    dq = np.where(q > LOG_CLAMP, -p / qc, 0.0)
    return dp, dq

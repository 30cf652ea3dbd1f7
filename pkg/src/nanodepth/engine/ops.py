"""Forward and backward kernels for the fixed op set used by the depth networks.

All tensors are plain ``numpy.ndarray`` objects in NCHW layout. Every op
preserves the dtype of its input (float32 by default, float64 for
verification). Backward functions take the upstream gradient plus the same
arguments as the forward call and return gradients in argument order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when tensor shapes are inconsistent with an op's contract."""


@dataclass(frozen=True)
class SeluParams:
    lam: float = 1.0507009873554805
    alpha: float = 1.6732632423543772

    def __post_init__(self):
        if not (self.lam > 1.0 and self.alpha > 1.0):
            raise ValueError("SELU constants must satisfy lambda > 1 and alpha > 1")


SELU = SeluParams()


def check_tensor(x: np.ndarray, name: str = "input") -> None:
    if x.ndim != 4:
        raise ShapeError(f"{name}: expected a 4-D NCHW tensor, got shape {x.shape}")
    if min(x.shape) < 1:
        raise ShapeError(f"{name}: all dimensions must be >= 1, got {x.shape}")


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


# ---------------------------------------------------------------------------
# Dense convolution
# ---------------------------------------------------------------------------

def _check_conv(x, w, stride, pad):
    check_tensor(x)
    if w.ndim != 4:
        raise ShapeError(f"weights: expected [outC, inC, kH, kW], got {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"channel mismatch: input has {x.shape[1]} channels, weights expect {w.shape[1]}")
    kh, kw = w.shape[2:]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel dims must be odd, got {kh}x{kw}")
    if stride < 1 or pad < 0:
        raise ShapeError(f"invalid stride={stride} / pad={pad}")
    ho = conv_output_size(x.shape[2], kh, stride, pad)
    wo = conv_output_size(x.shape[3], kw, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"non-positive output size {ho}x{wo} for input {x.shape[2]}x{x.shape[3]}, "
            f"kernel {kh}x{kw}, stride {stride}, pad {pad}")
    return kh, kw, ho, wo


def _im2col(x, kh, kw, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    # rows ordered (n, ho, wo); columns ordered (c, kh, kw) to match w.reshape(outC, -1)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)


def conv2d(x, w, b=None, stride: int = 1, pad: int = 0):
    """Cross-correlation with zero padding.

    Args:
        x: input of shape (n, inC, h, w).
        w: weights of shape (outC, inC, kH, kW); kH and kW must be odd.
        b: optional bias of length outC.
        stride: spatial stride.
        pad: zero padding applied to each spatial border.

    Returns:
        Tensor of shape (n, outC, hOut, wOut).
    """
    kh, kw, ho, wo = _check_conv(x, w, stride, pad)
    n = x.shape[0]
    out_c = w.shape[0]
    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        return pointwise_conv(x, w, b)
    cols = _im2col(x, kh, kw, stride, pad)
    out = cols @ w.reshape(out_c, -1).T
    out = out.reshape(n, ho, wo, out_c).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b.reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out, dtype=x.dtype)


def conv2d_backward(dout, x, w, b=None, stride: int = 1, pad: int = 0):
    """Returns ``(dx, dw, db)``; ``db`` is None when the forward had no bias."""
    kh, kw, ho, wo = _check_conv(x, w, stride, pad)
    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        return pointwise_conv_backward(dout, x, w, b)
    n, c, h, wd = x.shape
    out_c = w.shape[0]
    d2 = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, out_c)
    cols = _im2col(x, kh, kw, stride, pad)
    dw = (d2.T @ cols).reshape(w.shape)
    dcols = (d2 @ w.reshape(out_c, -1)).reshape(n, ho, wo, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:pad + h, pad:pad + wd]
    db = dout.sum(axis=(0, 2, 3)) if b is not None else None
    return np.ascontiguousarray(dx), dw.astype(w.dtype, copy=False), db


# ---------------------------------------------------------------------------
# Pointwise (1x1) convolution
# ---------------------------------------------------------------------------

def pointwise_conv(x, w, b=None):
    check_tensor(x)
    if w.ndim != 4 or w.shape[2:] != (1, 1):
        raise ShapeError(f"pointwise weights must be [outC, inC, 1, 1], got {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"channel mismatch: input has {x.shape[1]} channels, weights expect {w.shape[1]}")
    n, c, h, wd = x.shape
    out = np.matmul(w[:, :, 0, 0], x.reshape(n, c, h * wd)).reshape(n, -1, h, wd)
    if b is not None:
        out += b.reshape(1, -1, 1, 1)
    return out


def pointwise_conv_backward(dout, x, w, b=None):
    n, c, h, wd = x.shape
    w2 = w[:, :, 0, 0]
    d3 = dout.reshape(n, w.shape[0], h * wd)
    dx = np.matmul(w2.T, d3).reshape(x.shape)
    dw = np.matmul(d3, x.reshape(n, c, h * wd).transpose(0, 2, 1)).sum(axis=0)
    db = dout.sum(axis=(0, 2, 3)) if b is not None else None
    return dx, dw.reshape(w.shape), db


# ---------------------------------------------------------------------------
# Depthwise convolution
# ---------------------------------------------------------------------------

def _check_depthwise(x, w, stride, pad):
    check_tensor(x)
    if w.ndim != 4 or w.shape[1] != 1:
        raise ShapeError(f"depthwise weights must be [C, 1, kH, kW], got {w.shape}")
    if w.shape[0] != x.shape[1]:
        raise ShapeError(
            f"channel mismatch: input has {x.shape[1]} channels, depthwise weights {w.shape[0]}")
    kh, kw = w.shape[2:]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel dims must be odd, got {kh}x{kw}")
    ho = conv_output_size(x.shape[2], kh, stride, pad)
    wo = conv_output_size(x.shape[3], kw, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(f"non-positive output size {ho}x{wo}")
    return kh, kw, ho, wo


def depthwise_conv2d(x, w, stride: int = 1, pad: int = 0):
    kh, kw, ho, wo = _check_depthwise(x, w, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    out = np.zeros((x.shape[0], x.shape[1], ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out += w[:, 0, i, j].reshape(1, -1, 1, 1) * \
                xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return out


def depthwise_conv2d_backward(dout, x, w, stride: int = 1, pad: int = 0):
    kh, kw, ho, wo = _check_depthwise(x, w, stride, pad)
    n, c, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            win = (slice(None), slice(None),
                   slice(i, i + stride * ho, stride), slice(j, j + stride * wo, stride))
            dw[:, 0, i, j] = (dout * xp[win]).sum(axis=(0, 2, 3))
            dxp[win] += w[:, 0, i, j].reshape(1, -1, 1, 1) * dout
    return np.ascontiguousarray(dxp[:, :, pad:pad + h, pad:pad + wd]), dw


# ---------------------------------------------------------------------------
# SELU
# ---------------------------------------------------------------------------

def selu(x, params: SeluParams = SELU):
    neg = params.lam * params.alpha * np.expm1(np.minimum(x, 0))
    return np.where(x > 0, params.lam * x, neg).astype(x.dtype, copy=False)


def selu_backward(dout, x, params: SeluParams = SELU):
    # right derivative (lambda) at exactly zero
    grad = np.where(x >= 0, params.lam, params.lam * params.alpha * np.exp(np.minimum(x, 0)))
    return (dout * grad).astype(x.dtype, copy=False)


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

def _check_bn(x, *vectors):
    check_tensor(x)
    c = x.shape[1]
    for v in vectors:
        if v is not None and np.shape(v) != (c,):
            raise ShapeError(f"batchnorm vector of shape {np.shape(v)} does not match {c} channels")


def _bc(v):
    return np.asarray(v).reshape(1, -1, 1, 1)


def batchnorm(x, mean, var, gamma, beta, eps: float = 1e-5):
    """Inference-mode batch normalization using the supplied statistics."""
    _check_bn(x, mean, var, gamma, beta)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    if np.any(np.asarray(var) < 0):
        raise ValueError("batchnorm variance must be non-negative")
    inv = 1.0 / np.sqrt(_bc(var) + eps)
    return ((x - _bc(mean)) * inv * _bc(gamma) + _bc(beta)).astype(x.dtype, copy=False)


def batchnorm_backward(dout, x, mean, var, gamma, beta, eps: float = 1e-5):
    """Gradient of inference-mode batchnorm: ``(dx, dgamma, dbeta)``."""
    inv = 1.0 / np.sqrt(_bc(var) + eps)
    xhat = (x - _bc(mean)) * inv
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dx = (dout * _bc(gamma) * inv).astype(x.dtype, copy=False)
    return dx, dgamma, dbeta


def batchnorm_train(x, gamma, beta, eps: float = 1e-5):
    """Training-mode batch normalization.

    Returns ``(out, batch_mean, batch_var)`` where the variance is the biased
    estimate over (n, h, w). Updating running statistics is left to the
    caller (see :func:`update_running_stats`).
    """
    _check_bn(x, gamma, beta)
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    out = batchnorm(x, mean, var, gamma, beta, eps)
    return out, mean, var


def batchnorm_train_backward(dout, x, gamma, beta, eps: float = 1e-5):
    m = x.shape[0] * x.shape[2] * x.shape[3]
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(_bc(var) + eps)
    xhat = (x - _bc(mean)) * inv
    dbeta = dout.sum(axis=(0, 2, 3))
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dxhat = dout * _bc(gamma)
    dx = inv / m * (m * dxhat - _bc(dxhat.sum(axis=(0, 2, 3)))
                    - xhat * _bc((dxhat * xhat).sum(axis=(0, 2, 3))))
    return dx.astype(x.dtype, copy=False), dgamma, dbeta


def update_running_stats(running_mean, running_var, batch_mean, batch_var, momentum: float = 0.99):
    """Exponential moving average, ``momentum`` weighting the old value."""
    new_mean = momentum * running_mean + (1.0 - momentum) * batch_mean
    new_var = momentum * running_var + (1.0 - momentum) * batch_var
    return new_mean.astype(running_mean.dtype), new_var.astype(running_var.dtype)


# ---------------------------------------------------------------------------
# Pooling, upsampling, concatenation
# ---------------------------------------------------------------------------

def _pool_windows(x):
    check_tensor(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"pool2 requires even spatial dims, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, h // 2, w // 2, 4)


def pool2(x, kind: str = "avg"):
    """2x2 pooling with stride 2; ``kind`` is ``"avg"`` or ``"max"``."""
    win = _pool_windows(x)
    if kind == "avg":
        return win.mean(axis=-1, dtype=x.dtype)
    if kind == "max":
        return win.max(axis=-1)
    raise ValueError(f"unknown pool kind {kind!r}")


def pool2_backward(dout, x, kind: str = "avg"):
    n, c, h, w = x.shape
    if kind == "avg":
        spread = np.repeat(dout[..., None], 4, axis=-1) * 0.25
    elif kind == "max":
        win = _pool_windows(x)
        idx = win.argmax(axis=-1)  # first occurrence on ties
        spread = np.zeros(win.shape, dtype=dout.dtype)
        np.put_along_axis(spread, idx[..., None], dout[..., None], axis=-1)
    else:
        raise ValueError(f"unknown pool kind {kind!r}")
    dx = spread.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return dx.reshape(x.shape).astype(x.dtype, copy=False)


def _interp_matrix(size: int, dtype) -> np.ndarray:
    """Align-corners bilinear weights mapping ``size`` samples to ``2*size``."""
    out = 2 * size
    m = np.zeros((out, size), dtype=np.float64)
    if size == 1:
        m[:, 0] = 1.0
        return m.astype(dtype)
    pos = np.arange(out) * (size - 1) / (out - 1)
    lo = np.minimum(np.floor(pos).astype(int), size - 2)
    frac = pos - lo
    m[np.arange(out), lo] = 1.0 - frac
    m[np.arange(out), lo + 1] += frac
    return m.astype(dtype)


def bilinear_upsample2x(x):
    check_tensor(x)
    uh = _interp_matrix(x.shape[2], x.dtype)
    uw = _interp_matrix(x.shape[3], x.dtype)
    return np.matmul(np.matmul(uh, x), uw.T)


def bilinear_upsample2x_backward(dout, x):
    uh = _interp_matrix(x.shape[2], x.dtype)
    uw = _interp_matrix(x.shape[3], x.dtype)
    return np.matmul(np.matmul(uh.T, dout), uw)


def concat_channels(*xs):
    """Concatenate along channels, first argument's channels first."""
    if len(xs) < 1:
        raise ShapeError("concat needs at least one tensor")
    for t in xs:
        check_tensor(t)
    n, _, h, w = xs[0].shape
    for t in xs[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (n, h, w):
            raise ShapeError(
                f"concat: batch/spatial mismatch {xs[0].shape} vs {t.shape}")
    return np.concatenate(xs, axis=1)


def split_channels(dout, sizes):
    """Backward of :func:`concat_channels`: split a gradient by channel counts."""
    bounds = np.cumsum(sizes)[:-1]
    return [np.ascontiguousarray(p) for p in np.split(dout, bounds, axis=1)]

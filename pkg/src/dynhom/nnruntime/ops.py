"""Differentiable operators on 4-D (B, C, H, W) tensors.

Convolution is cross-correlation with zero same-padding, stride 1, kernel
1x1 or 3x3, so spatial size is controlled solely by pooling.  Every op here
passes central finite-difference gradient checks in double precision (see
tests/test_nnruntime.py).
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ShapeMismatch
from .tensor import Parameter, Tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _require_4d(t: Tensor, op: str) -> None:
    if t.data.ndim != 4:
        raise ShapeMismatch(f"{op} expects (B, C, H, W), got {t.data.shape}")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weight: Parameter, bias: Parameter) -> Tensor:
    """Same-padding cross-correlation; kernel size read off the weight."""
    _require_4d(x, "conv2d")
    if weight.data.ndim != 4 or weight.data.shape[2] != weight.data.shape[3]:
        raise ShapeMismatch(f"weight must be (O, C, k, k), got {weight.data.shape}")
    k = weight.data.shape[2]
    if k not in (1, 3):
        raise ShapeMismatch(f"kernel size {k} unsupported (1 or 3)")
    if weight.data.shape[1] != x.data.shape[1]:
        raise ShapeMismatch(
            f"input has {x.data.shape[1]} channels, weight expects {weight.data.shape[1]}")
    if bias.data.shape != (weight.data.shape[0],):
        raise ShapeMismatch(f"bias shape {bias.data.shape} vs {weight.data.shape[0]} filters")

    if k == 3:
        xpad = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
        out_data = kernels.conv3x3_fwd(xpad, weight.data, bias.data)

        def backward(g):
            g = np.ascontiguousarray(g)
            x.accumulate_grad(kernels.conv3x3_bwd_input(g, weight.data))
            weight.accumulate_grad(kernels.conv3x3_bwd_weight(g, xpad))
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))
    else:
        w2 = weight.data[:, :, 0, 0]
        out_data = np.tensordot(x.data, w2, axes=([1], [1])).transpose(0, 3, 1, 2)
        out_data = out_data + bias.data[None, :, None, None]

        def backward(g):
            x.accumulate_grad(
                np.tensordot(g, w2, axes=([1], [0])).transpose(0, 3, 1, 2))
            dw = np.tensordot(g, x.data, axes=([0, 2, 3], [0, 2, 3]))
            weight.accumulate_grad(dw[:, :, None, None])
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))

    return Tensor(out_data, parents=(x, weight, bias), backward_fn=backward)


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

class BatchNormState:
    """Running statistics carried between training steps."""

    def __init__(self, channels: int, dtype=np.float64):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)


def batch_norm(x: Tensor, scale: Parameter, shift: Parameter,
               state: BatchNormState, mode: str) -> Tensor:
    _require_4d(x, "batch_norm")
    c = x.data.shape[1]
    if scale.data.shape != (c,) or shift.data.shape != (c,):
        raise ShapeMismatch(f"scale/shift must have shape ({c},)")
    if mode == "train" and x.data.shape[0] < 2:
        raise ShapeMismatch("train-mode batch norm needs batch >= 2")

    if mode == "train":
        axes = (0, 2, 3)
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        state.running_mean = BN_MOMENTUM * state.running_mean + (1 - BN_MOMENTUM) * mean
        state.running_var = BN_MOMENTUM * state.running_var + (1 - BN_MOMENTUM) * var
        istd = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x.data - mean[None, :, None, None]) * istd[None, :, None, None]
        out_data = (scale.data[None, :, None, None] * xhat
                    + shift.data[None, :, None, None])
        n = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]

        def backward(g):
            dxhat = g * scale.data[None, :, None, None]
            sum_dxhat = dxhat.sum(axis=axes)
            sum_dxhat_xhat = (dxhat * xhat).sum(axis=axes)
            dx = (istd[None, :, None, None] / n) * (
                n * dxhat
                - sum_dxhat[None, :, None, None]
                - xhat * sum_dxhat_xhat[None, :, None, None])
            x.accumulate_grad(dx)
            scale.accumulate_grad((g * xhat).sum(axis=axes))
            shift.accumulate_grad(g.sum(axis=axes))
    elif mode == "infer":
        istd = 1.0 / np.sqrt(state.running_var + BN_EPS)
        xhat = (x.data - state.running_mean[None, :, None, None]) * istd[None, :, None, None]
        out_data = (scale.data[None, :, None, None] * xhat
                    + shift.data[None, :, None, None])

        def backward(g):
            x.accumulate_grad(g * (scale.data * istd)[None, :, None, None])
            scale.accumulate_grad((g * xhat).sum(axis=(0, 2, 3)))
            shift.accumulate_grad(g.sum(axis=(0, 2, 3)))
    else:
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")

    return Tensor(out_data, parents=(x, scale, shift), backward_fn=backward)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        x.accumulate_grad(g * mask)

    return Tensor(np.where(mask, x.data, 0), parents=(x,), backward_fn=backward)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out_data = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                        np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    def backward(g):
        x.accumulate_grad(g * out_data * (1.0 - out_data))

    return Tensor(out_data, parents=(x,), backward_fn=backward)


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------

def max_pool2(x: Tensor) -> Tensor:
    _require_4d(x, "max_pool2")
    b, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"max_pool2 needs even spatial dims, got {h}x{w}")
    blocks = x.data.reshape(b, c, h // 2, 2, w // 2, 2)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=4)
    out_data = np.take_along_axis(blocks, arg[..., None], axis=4)[..., 0]

    def backward(g):
        dblocks = np.zeros((b, c, h // 2, w // 2, 4), dtype=g.dtype)
        np.put_along_axis(dblocks, arg[..., None], g[..., None], axis=4)
        dx = dblocks.reshape(b, c, h // 2, w // 2, 2, 2)
        dx = dx.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
        x.accumulate_grad(dx)

    return Tensor(out_data, parents=(x,), backward_fn=backward)


def avg_pool_global(x: Tensor) -> Tensor:
    _require_4d(x, "avg_pool_global")
    b, c, h, w = x.data.shape
    out_data = x.data.mean(axis=(2, 3), keepdims=True)

    def backward(g):
        x.accumulate_grad(np.broadcast_to(g / (h * w), x.data.shape).copy())

    return Tensor(out_data, parents=(x,), backward_fn=backward)


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def dropout(x: Tensor, keep_prob: float, mode: str,
            rng: np.random.Generator) -> Tensor:
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if mode == "infer" or keep_prob == 1.0:
        return x
    mask = (rng.random(x.data.shape) < keep_prob).astype(x.data.dtype) / keep_prob

    def backward(g):
        x.accumulate_grad(g * mask)

    return Tensor(x.data * mask, parents=(x,), backward_fn=backward)


# ---------------------------------------------------------------------------
# upsampling, concatenation, addition
# ---------------------------------------------------------------------------

_UPSAMPLE_CACHE: dict[tuple[int, str], np.ndarray] = {}


def _upsample_matrix(n: int, dtype) -> np.ndarray:
    """(2n, n) bilinear interpolation matrix, half-pixel centers, edges
    clamped.  Rows sum to one, so constants are preserved exactly."""
    key = (n, np.dtype(dtype).name)
    if key not in _UPSAMPLE_CACHE:
        m = np.zeros((2 * n, n), dtype=np.float64)
        for i in range(2 * n):
            s = (i + 0.5) / 2.0 - 0.5
            lo = int(np.floor(s))
            f = s - lo
            m[i, min(max(lo, 0), n - 1)] += 1.0 - f
            m[i, min(max(lo + 1, 0), n - 1)] += f
        _UPSAMPLE_CACHE[key] = m.astype(dtype)
    return _UPSAMPLE_CACHE[key]


def upsample2x(x: Tensor) -> Tensor:
    _require_4d(x, "upsample2x")
    b, c, h, w = x.data.shape
    uh = _upsample_matrix(h, x.data.dtype)
    uw = _upsample_matrix(w, x.data.dtype)
    out_data = np.einsum("ij,bcjk,lk->bcil", uh, x.data, uw, optimize=True)

    def backward(g):
        x.accumulate_grad(np.einsum("ij,bcil,lk->bcjk", uh, g, uw, optimize=True))

    return Tensor(out_data, parents=(x,), backward_fn=backward)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _require_4d(a, "concat_channels")
    _require_4d(b, "concat_channels")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ShapeMismatch(f"cannot concat {a.data.shape} with {b.data.shape}")
    ca = a.data.shape[1]

    def backward(g):
        a.accumulate_grad(g[:, :ca])
        b.accumulate_grad(g[:, ca:])

    return Tensor(np.concatenate([a.data, b.data], axis=1),
                  parents=(a, b), backward_fn=backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"cannot add {a.data.shape} to {b.data.shape}")

    def backward(g):
        a.accumulate_grad(g)
        b.accumulate_grad(g)

    return Tensor(a.data + b.data, parents=(a, b), backward_fn=backward)

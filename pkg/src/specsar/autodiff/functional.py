"""Fused differentiable ops used by the network layers.

Each op computes its forward pass in numpy and returns a tape node with a
hand-derived backward. All of them are covered by finite-difference checks.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.special import erf

from specsar.autodiff.tensor import Tensor, matmul, record_macs
from specsar.errors import DimensionError

LN_EPS = 1e-5


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor._make(out, (x,), backward, "log_softmax")


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / math.sqrt(2.0)))
    out = (xd * cdf).astype(xd.dtype, copy=False)

    def backward(g):
        pdf = np.exp(-0.5 * xd * xd) / math.sqrt(2.0 * math.pi)
        return ((g * (cdf + xd * pdf)).astype(xd.dtype, copy=False),)

    return Tensor._make(out, (x,), backward, "gelu")


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    # split by sign so exp never overflows
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ez = np.exp(xd[~pos])
    out[~pos] = ez / (1.0 + ez)
    return Tensor._make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), computed stably."""
    xd = x.data
    out = np.maximum(xd, 0) + np.log1p(np.exp(-np.abs(xd)))

    def backward(g):
        s = np.empty_like(xd)
        pos = xd >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
        ez = np.exp(xd[~pos])
        s[~pos] = ez / (1.0 + ez)
        return (g * s,)

    return Tensor._make(out, (x,), backward, "softplus")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalize over the trailing axis, then apply the affine ``gamma``/``beta``."""
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match trailing extent {c}"
        )
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gamma.data + beta.data

    def backward(g):
        red = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=red)
        dbeta = g.sum(axis=red)
        dxhat = g * gamma.data
        dx = rstd * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgamma, dbeta

    return Tensor._make(out, (x, gamma, beta), backward, "layer_norm")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear expects trailing extent {weight.shape[0]}, got {x.shape}")
    y = matmul(x, weight)
    return y + bias if bias is not None else y


def conv_output_size(n: int, kernel: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - kernel) // stride + 1


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """2-D cross-correlation over NCHW input with OIHW weights."""
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    b, c_in, h, w = x.shape
    c_out, c_per_group, kh, kw = weight.shape
    if c_in % groups or c_out % groups:
        raise DimensionError(f"channels {c_in}->{c_out} not divisible by groups={groups}")
    if c_per_group != c_in // groups:
        raise DimensionError(
            f"weight expects {c_per_group} channels per group, input gives {c_in // groups}"
        )
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise DimensionError(
            f"input {h}x{w} with padding {padding} is smaller than kernel {kh}x{kw}"
        )
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)
    g = groups
    o_per_group = c_out // g

    xd = x.data
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    cols = np.empty((b, c_in, kh, kw, oh, ow), dtype=xd.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * (oh - 1) + 1 : stride, j : j + stride * (ow - 1) + 1 : stride]
    cols_g = cols.reshape(b, g, c_per_group, kh, kw, oh, ow)
    w_g = weight.data.reshape(g, o_per_group, c_per_group, kh, kw)
    out = np.einsum("bgcijyx,gocij->bgoyx", cols_g, w_g, optimize=True).reshape(b, c_out, oh, ow)
    if bias is not None:
        out = out + bias.data.reshape(1, c_out, 1, 1)
    record_macs(b * c_out * oh * ow * c_per_group * kh * kw)

    def backward(gr):
        gr_g = gr.reshape(b, g, o_per_group, oh, ow)
        dw = np.einsum("bgoyx,bgcijyx->gocij", gr_g, cols_g, optimize=True).reshape(weight.shape)
        dcols = np.einsum("bgoyx,gocij->bgcijyx", gr_g, w_g, optimize=True).reshape(
            b, c_in, kh, kw, oh, ow
        )
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + stride * (oh - 1) + 1 : stride, j : j + stride * (ow - 1) + 1 : stride] += dcols[:, :, i, j]
        dx = dxp[:, :, padding : padding + h, padding : padding + w] if padding else dxp
        grads = [dx, dw]
        if bias is not None:
            grads.append(gr.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out.astype(xd.dtype, copy=False), parents, backward, "conv2d")


def _bilinear_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Row i holds the interpolation weights for output i (half-pixel centers)."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        src = max((i + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(math.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        frac = src - i0
        m[i, i0] += 1.0 - frac
        m[i, i1] += frac
    return m.astype(dtype)


def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Resize NCHW maps with bilinear interpolation (half-pixel, no corner alignment)."""
    if x.ndim != 4:
        raise DimensionError(f"bilinear_upsample expects NCHW input, got {x.shape}")
    _, _, h, w = x.shape
    if (h, w) == (out_h, out_w):
        return x
    ah = _bilinear_matrix(h, out_h, x.dtype)
    aw = _bilinear_matrix(w, out_w, x.dtype)
    out = np.einsum("yh,bchw,xw->bcyx", ah, x.data, aw, optimize=True)

    def backward(g):
        return (np.einsum("yh,bcyx,xw->bchw", ah, g, aw, optimize=True),)

    return Tensor._make(out, (x,), backward, "bilinear_upsample")


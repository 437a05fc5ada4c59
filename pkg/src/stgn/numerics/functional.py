"""Attention, normalization, statistics and image primitives on :class:`Tensor`."""

from __future__ import annotations

import numpy as np

from stgn import _kernels
from stgn.numerics.tensor import (
    DTYPE,
    DimensionError,
    Tensor,
    _make,
    add,
    as_tensor,
    maximum,
    mean,
    mul,
    reshape,
    sqrt,
    sub,
    tsum,
    transpose,
)

STD_FLOOR = 1e-5


class EmptyRegionError(ValueError):
    """A mask selected no rows, so masked statistics are undefined."""


def attention(q, k, v, key_mask=None, bias=None):
    """Scaled dot-product attention over the last two axes.

    ``q`` is (..., n_q, d), ``k`` is (..., n_k, d) and ``v`` is (..., n_k, d_v).
    ``key_mask`` (broadcastable to (..., n_k)) drops keys where it is false.
    ``bias`` (broadcastable to (..., n_q, n_k)) is added to the scaled logits.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    b = None if bias is None else as_tensor(bias)
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"query/key feature dims differ: q{q.shape} vs k{k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"key/value lengths differ: k{k.shape} vs v{v.shape}")
    if k.shape[-2] < 1:
        raise DimensionError(f"attention needs at least one key, got k{k.shape}")
    scale = 1.0 / np.sqrt(q.shape[-1])
    qd, kd, vd = q.data, k.data, v.data
    s = (qd @ np.swapaxes(kd, -1, -2)) * scale
    if b is not None:
        s = s + b.data
    if key_mask is not None:
        keep = np.asarray(key_mask, dtype=bool)[..., None, :]
        s = np.where(keep, s, -np.inf)
    p = _kernels.attention_probs(s)
    out = p @ vd

    def backward(g):
        gv = np.swapaxes(p, -1, -2) @ g
        gp = g @ np.swapaxes(vd, -1, -2)
        gl = _kernels.softmax_bwd(gp, p)
        gs = gl * scale
        gq = gs @ kd
        gk = np.swapaxes(gs, -1, -2) @ qd
        grads = (_sum_to(gq, qd.shape), _sum_to(gk, kd.shape), _sum_to(gv, vd.shape))
        return grads if b is None else grads + (_sum_to(gl, b.shape),)

    return _make(out, (q, k, v) if b is None else (q, k, v, b), backward)


def _sum_to(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    g = g.sum(axis=tuple(range(extra))) if extra > 0 else g
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    return g.sum(axis=axes, keepdims=True) if axes else g


def moments(x, axis=-2):
    """Per-channel mean and clamped population std over ``axis``."""
    x = as_tensor(x)
    mu = mean(x, axis=axis, keepdims=True)
    xc = sub(x, mu)
    var = mean(mul(xc, xc), axis=axis, keepdims=True)
    return mu, sqrt(maximum(var, STD_FLOOR**2))


def masked_moments(x, mask):
    """Mean and std per channel over rows whose mask value is at least 0.5.

    ``x`` is (..., n, c) and ``mask`` is (..., n). Returns tensors shaped
    (..., 1, c). Raises :class:`EmptyRegionError` if any mask selects nothing.
    """
    x = as_tensor(x)
    m = np.asarray(mask.data if isinstance(mask, Tensor) else mask, dtype=DTYPE)
    if m.shape != x.shape[:-1]:
        raise DimensionError(f"mask shape {m.shape} does not match rows of x{x.shape}")
    sel = (m >= 0.5).astype(DTYPE)
    count = sel.sum(axis=-1)
    if np.any(count == 0):
        raise EmptyRegionError("mask selects no rows (all entries < 0.5)")
    w = Tensor((sel / count[..., None])[..., None])
    mu = tsum(mul(x, w), axis=-2, keepdims=True)
    xc = sub(x, mu)
    var = tsum(mul(mul(xc, xc), w), axis=-2, keepdims=True)
    return mu, sqrt(maximum(var, STD_FLOOR**2))


def adain(x, ref, ref_mask):
    """Renormalize each channel of ``x`` to the masked moments of ``ref``."""
    x, ref = as_tensor(x), as_tensor(ref)
    if x.shape[-1] != ref.shape[-1]:
        raise DimensionError(f"channel counts differ: x{x.shape} vs ref{ref.shape}")
    mu_x, sd_x = moments(x)
    mu_r, sd_r = masked_moments(ref, ref_mask)
    return add(mul(sub(x, mu_x), sd_r / sd_x), mu_r)


def adain_to(x, mu_r, sd_r):
    """AdaIN toward precomputed target moments shaped (..., 1, c)."""
    mu_x, sd_x = moments(x)
    return add(mul(sub(x, mu_x), sd_r / sd_x), mu_r)


def gram_matrix(f):
    """(1/n) F Fᵀ for features laid out (..., c, n)."""
    f = as_tensor(f)
    if f.shape[-1] < 1:
        raise DimensionError(f"gram_matrix needs n >= 1, got {f.shape}")
    return mul(f @ transpose(f, tuple(range(f.ndim - 2)) + (f.ndim - 1, f.ndim - 2)), 1.0 / f.shape[-1])


def conv2d(x, w, b=None, stride=1, padding=0):
    """2-D cross-correlation, channels-last.

    ``x`` is (B, H, W, C_in), ``w`` is (kh, kw, C_in, C_out).
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[-1] != w.shape[2]:
        raise DimensionError(f"conv2d expects x(B,H,W,C) and w(kh,kw,C,O), got x{x.shape} w{w.shape}")
    kh, kw, cin, cout = w.shape
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0))) if padding else x.data
    B, Hp, Wp, _ = xp.shape
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    if Ho < 1 or Wo < 1:
        raise DimensionError(f"input {x.shape} too small for kernel {kh}x{kw}")
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, : (Ho - 1) * stride + 1 : stride, : (Wo - 1) * stride + 1 : stride]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B * Ho * Wo, kh * kw * cin)
    wm = w.data.reshape(kh * kw * cin, cout)
    out = (cols @ wm).reshape(B, Ho, Wo, cout)
    if b is not None:
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        g2 = g.reshape(-1, cout)
        gw = (cols.T @ g2).reshape(w.shape)
        gcols = (g2 @ wm.T).reshape(B, Ho, Wo, kh, kw, cin)
        gxp = _kernels.col2im(gcols, xp.shape, kh, kw, stride)
        gx = gxp[:, padding : Hp - padding, padding : Wp - padding, :] if padding else gxp
        grads = (gx, gw)
        return grads if b is None else grads + (g2.sum(axis=0),)

    return _make(out, parents, backward)


def patchify(x, p):
    """(B, H, W, C) -> (B, (H/p)(W/p), p*p*C), row-major over the patch grid."""
    x = as_tensor(x)
    B, H, W, C = x.shape
    if H % p or W % p:
        raise DimensionError(f"image {H}x{W} not divisible by patch {p}")
    y = reshape(x, (B, H // p, p, W // p, p, C))
    y = transpose(y, (0, 1, 3, 2, 4, 5))
    return reshape(y, (B, (H // p) * (W // p), p * p * C))


def unpatchify(tokens, p, H, W):
    tokens = as_tensor(tokens)
    B, n, D = tokens.shape
    C = D // (p * p)
    if n != (H // p) * (W // p) or C * p * p != D:
        raise DimensionError(f"tokens {tokens.shape} do not tile a {H}x{W} image with patch {p}")
    y = reshape(tokens, (B, H // p, W // p, p, p, C))
    y = transpose(y, (0, 1, 3, 2, 4, 5))
    return reshape(y, (B, H, W, C))


def area_downsample(x, factor):
    """Average non-overlapping factor x factor blocks over the last two axes."""
    x = as_tensor(x)
    *lead, H, W = x.shape
    if H % factor or W % factor:
        raise DimensionError(f"{H}x{W} not divisible by {factor}")
    y = reshape(x, tuple(lead) + (H // factor, factor, W // factor, factor))
    return mean(y, axis=(-3, -1))


def nearest_upsample(x, factor):
    """Repeat every element factor times along each of the last two axes."""
    x = as_tensor(x)
    *lead, H, W = x.shape
    nl = len(lead)

    def backward(g):
        g = g.reshape(tuple(lead) + (H, factor, W, factor))
        return (g.sum(axis=(nl + 1, nl + 3)),)

    out = np.repeat(np.repeat(x.data, factor, axis=-2), factor, axis=-1)
    return _make(out, (x,), backward)

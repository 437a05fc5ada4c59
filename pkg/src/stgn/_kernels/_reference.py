"""Pure numpy/Python implementations of the hot kernels.

These define the semantics; the compiled module must agree with them to
rounding (see tests/test_kernels.py).
"""

import numpy as np

_GELU_C = np.sqrt(2.0 / np.pi)


def gelu_fwd(x):
    """tanh-approximate GELU; returns (value, derivative)."""
    inner = _GELU_C * (x + 0.044715 * x * x * x)
    th = np.tanh(inner)
    out = 0.5 * x * (1.0 + th)
    dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    deriv = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th**2) * dinner
    return out, deriv


def layer_norm_fwd(x, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    return xc * inv, inv


def layer_norm_bwd(g, xhat, inv):
    n = xhat.shape[-1]
    return inv * (g - g.mean(axis=-1, keepdims=True) - xhat * (g * xhat).sum(axis=-1, keepdims=True) / n)


def attention_probs(s):
    """Row softmax of a logit block; rows that are entirely -inf stay zero."""
    m = s.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(s - m)
    z = e.sum(axis=-1, keepdims=True)
    return e / np.where(z > 0, z, 1.0)


def softmax_bwd(g, y):
    return y * (g - (g * y).sum(axis=-1, keepdims=True))


def col2im(cols, out_shape, kh, kw, stride):
    """Scatter-add patch columns (B, Ho, Wo, kh, kw, C) back onto a padded image."""
    B, Hp, Wp, C = out_shape
    out = np.zeros(out_shape, dtype=np.float64)
    Ho, Wo = cols.shape[1], cols.shape[2]
    for i in range(kh):
        for j in range(kw):
            out[:, i : i + stride * Ho : stride, j : j + stride * Wo : stride, :] += cols[:, :, :, i, j, :]
    return out


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def hamming_to_templates(cell, templates):
    """Hamming distance from one binary cell (h, w) to each template (T, h, w)."""
    return (templates != cell[None]).reshape(len(templates), -1).sum(axis=1)

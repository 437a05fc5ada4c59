"""Named-parameter building blocks shared by the encoder and the denoiser.

Parameters live in a flat ``dict[str, Tensor]``; every layer reads its weights
by prefix. This keeps checkpointing, freezing and grad checks uniform.
"""

from __future__ import annotations

import numpy as np

from stgn import numerics as nx
from stgn.numerics import Tensor


def param(params, name, array):
    if name in params:
        raise KeyError(f"duplicate parameter {name}")
    params[name] = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True, name=name)
    return params[name]


def init_dense(params, rng, name, din, dout, zero=False, bias=True, std=None):
    w = np.zeros((din, dout)) if zero else rng.normal((din, dout), std if std is not None else 1.0 / np.sqrt(din))
    param(params, f"{name}.w", w)
    if bias:
        param(params, f"{name}.b", np.zeros(dout))


def dense(params, name, x):
    return nx.linear(x, params[f"{name}.w"], params.get(f"{name}.b"))


def init_norm(params, name, d):
    param(params, f"{name}.g", np.ones(d))
    param(params, f"{name}.b", np.zeros(d))


def norm(params, name, x):
    return nx.layer_norm(x, params[f"{name}.g"], params[f"{name}.b"])


def split_heads(x, heads):
    B, n, d = x.shape
    return nx.transpose(nx.reshape(x, (B, n, heads, d // heads)), (0, 2, 1, 3))


def merge_heads(x):
    B, h, n, dh = x.shape
    return nx.reshape(nx.transpose(x, (0, 2, 1, 3)), (B, n, h * dh))


def mha(q, k, v, heads, key_mask=None, bias=None):
    """Multi-head attention on merged (B, n, d) projections; ``bias`` is (heads, n_q, n_k)."""
    km = None if key_mask is None else np.asarray(key_mask, dtype=bool)[:, None, :]
    out = nx.attention(split_heads(q, heads), split_heads(k, heads), split_heads(v, heads), key_mask=km, bias=bias)
    return merge_heads(out)


def init_mlp(params, rng, name, d, hidden, dout=None, zero_out=False):
    init_dense(params, rng, f"{name}.fc1", d, hidden)
    init_dense(params, rng, f"{name}.fc2", hidden, dout or d, zero=zero_out)


def mlp(params, name, x):
    return dense(params, f"{name}.fc2", nx.gelu(dense(params, f"{name}.fc1", x)))


def init_block(params, rng, name, d, mlp_ratio=4):
    init_norm(params, f"{name}.ln1", d)
    for proj in ("q", "k", "v", "o"):
        init_dense(params, rng, f"{name}.attn.{proj}", d, d)
    init_norm(params, f"{name}.ln2", d)
    init_mlp(params, rng, f"{name}.mlp", d, mlp_ratio * d)


def block(params, name, x, heads):
    """Pre-norm transformer encoder block."""
    h = norm(params, f"{name}.ln1", x)
    q = dense(params, f"{name}.attn.q", h)
    k = dense(params, f"{name}.attn.k", h)
    v = dense(params, f"{name}.attn.v", h)
    x = x + dense(params, f"{name}.attn.o", mha(q, k, v, heads))
    return x + mlp(params, f"{name}.mlp", norm(params, f"{name}.ln2", x))


def init_qformer(params, rng, name, d, n_queries, mlp_ratio=2):
    """Learned queries, one cross-attention layer, one MLP, output projection."""
    param(params, f"{name}.queries", rng.normal((n_queries, d), 0.5))
    init_norm(params, f"{name}.lnq", d)
    init_norm(params, f"{name}.lnkv", d)
    for proj in ("q", "k", "v", "o"):
        init_dense(params, rng, f"{name}.xattn.{proj}", d, d)
    init_norm(params, f"{name}.ln2", d)
    init_mlp(params, rng, f"{name}.mlp", d, mlp_ratio * d)
    init_dense(params, rng, f"{name}.out", d, d)


def qformer(params, name, tokens, heads):
    B = tokens.shape[0]
    queries = params[f"{name}.queries"]
    qs = nx.mul(Tensor(np.ones((B, 1, 1))), queries)
    kv = norm(params, f"{name}.lnkv", tokens)
    hq = norm(params, f"{name}.lnq", qs)
    att = mha(
        dense(params, f"{name}.xattn.q", hq),
        dense(params, f"{name}.xattn.k", kv),
        dense(params, f"{name}.xattn.v", kv),
        heads,
    )
    h = qs + dense(params, f"{name}.xattn.o", att)
    h = h + mlp(params, f"{name}.mlp", norm(params, f"{name}.ln2", h))
    return dense(params, f"{name}.out", h)


def sincos_1d(pos, dim):
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = np.asarray(pos, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def sincos_2d(gh, gw, dim):
    """Fixed 2-D position table (gh*gw, dim): half the channels per axis."""
    ys, xs = np.meshgrid(np.arange(gh), np.arange(gw), indexing="ij")
    return np.concatenate([sincos_1d(ys.reshape(-1), dim // 2), sincos_1d(xs.reshape(-1), dim // 2)], axis=1)


def timestep_embedding(t, dim, scale=1000.0):
    return sincos_1d(np.asarray(t, dtype=np.float64).reshape(-1) * scale, dim)

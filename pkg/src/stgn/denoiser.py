"""Tiny diffusion transformer predicting the flow velocity on the glyph+scene canvas.

Each block computes self-attention and an additive style cross-attention that
share the same queries; the style branch reads the encoder's (K_s, V_s)
tokens. Time conditioning uses adaptive layer-norm modulation with zero-
initialized gates, so every block starts as the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stgn import layers as L
from stgn import numerics as nx
from stgn.numerics import Tensor


@dataclass(frozen=True)
class DenoiserConfig:
    scene_size: int = 32  # canvas is (2 * scene_size) x scene_size
    patch: int = 4
    width: int = 64
    heads: int = 4
    depth: int = 4
    mlp_ratio: int = 4
    time_dim: int = 64

    @property
    def canvas_hw(self):
        return 2 * self.scene_size, self.scene_size

    @property
    def grid(self):
        H, W = self.canvas_hw
        return H // self.patch, W // self.patch

    @property
    def n_tokens(self):
        gh, gw = self.grid
        return gh * gw

    @property
    def head_dim(self):
        return self.width // self.heads


@dataclass
class ConditioningSet:
    """Batched conditioning: canvases (B, 2H, W, 3), masks (B, 2H, W), styles (B, H, W, 3)."""

    concat_input: np.ndarray
    inpaint_mask: np.ndarray
    target_text: list
    style_img: np.ndarray
    # optional precomputed frozen-encoder tokens for style_img
    text_tokens: np.ndarray | None = None
    vis_tokens: np.ndarray | None = None

    def __post_init__(self):
        self.concat_input = np.asarray(self.concat_input, dtype=np.float64)
        self.inpaint_mask = np.asarray(self.inpaint_mask, dtype=np.float64)
        self.style_img = np.asarray(self.style_img, dtype=np.float64)
        if self.concat_input.ndim == 3:
            self.concat_input = self.concat_input[None]
            self.inpaint_mask = self.inpaint_mask[None]
            self.style_img = self.style_img[None]
        if self.concat_input.shape[:3] != self.inpaint_mask.shape:
            raise nx.DimensionError(f"canvas {self.concat_input.shape} and mask {self.inpaint_mask.shape} differ")
        half = self.concat_input.shape[1] // 2
        if np.any(self.inpaint_mask[:, :half] != 0):
            raise ValueError("inpaint mask must be zero on the glyph half")
        if not np.all((self.inpaint_mask == 0) | (self.inpaint_mask == 1)):
            raise ValueError("inpaint mask values must be 0 or 1")

    def __len__(self):
        return len(self.concat_input)

    def take(self, idx):
        idx = np.atleast_1d(idx)
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return ConditioningSet(
            self.concat_input[idx],
            self.inpaint_mask[idx],
            [self.target_text[i] for i in idx],
            self.style_img[idx],
            pick(self.text_tokens),
            pick(self.vis_tokens),
        )


@dataclass
class AttentionTrace:
    """Per-block (Q, K, V, self-attention output) arrays, heads merged: (B, n, d)."""

    blocks: list = field(default_factory=list)

    def __len__(self):
        return len(self.blocks)

    def kv(self):
        return [(b[1], b[2]) for b in self.blocks]


def to_model(img):
    """[0,1] image values to the centred model space."""
    return 2.0 * np.asarray(img, dtype=np.float64) - 1.0


def to_image(x):
    return (np.asarray(x, dtype=np.float64) + 1.0) / 2.0


def init_denoiser(rng, cfg: DenoiserConfig = DenoiserConfig()):
    params = {}
    d = cfg.width
    in_dim = cfg.patch * cfg.patch * 7
    L.init_dense(params, rng.child("embed"), "den.embed", in_dim, d)
    L.init_dense(params, rng.child("half"), "den.half", 1, d, bias=False, std=0.5)
    L.init_dense(params, rng.child("t1"), "den.t.fc1", cfg.time_dim, d)
    L.init_dense(params, rng.child("t2"), "den.t.fc2", d, d)
    for i in range(cfg.depth):
        r = rng.child(f"block{i}")
        name = f"den.blocks.{i}"
        L.init_dense(params, r.child("mod"), f"{name}.mod", d, 6 * d, zero=True)
        for proj in ("q", "k", "v", "o"):
            L.init_dense(params, r.child(proj), f"{name}.attn.{proj}", d, d)
        L.param(params, f"{name}.attn.rel", np.zeros((cfg.heads, rel_table_size(cfg))))
        L.init_dense(params, r.child("style_o"), f"{name}.style.o", d, d, zero=True)
        L.init_mlp(params, r.child("mlp"), f"{name}.mlp", d, cfg.mlp_ratio * d)
    L.init_dense(params, rng.child("fmod"), "den.final.mod", d, 2 * d, zero=True)
    L.init_dense(params, rng.child("out"), "den.final.out", d, cfg.patch * cfg.patch * 3, zero=True)
    return params



# Adam moves a parameter by about lr per step whatever its gradient scale; a
# useful logit bias is O(log n_tokens), so the table is stored divided by this.
REL_SCALE = 10.0


def rel_table_size(cfg):
    gh, gw = cfg.grid
    return (2 * gh - 1) * (2 * gw - 1)


def rel_index(cfg):
    """(n, n) index into a block's relative-position bias table, by (row, col) offset."""
    gh, gw = cfg.grid
    r, c = np.divmod(np.arange(gh * gw), gw)
    return (r[:, None] - r[None, :] + gh - 1) * (2 * gw - 1) + (c[:, None] - c[None, :] + gw - 1)


def half_flag(cfg):
    """(n, 1) indicator: 0 on glyph-half tokens, 1 on scene-half tokens."""
    gh, gw = cfg.grid
    return (np.arange(gh * gw) >= (gh // 2) * gw).astype(np.float64)[:, None]


def position_table(cfg):
    """Both halves share one positional table, so a glyph and the scene pixels it
    describes carry the same code; ``den.half`` tells the halves apart."""
    gh, gw = cfg.grid
    half = L.sincos_2d(gh // 2, gw, cfg.width)
    return np.concatenate([half, half], axis=0)


def _chunks(x, n):
    d = x.shape[-1] // n
    return [nx.reshape(x[:, i * d : (i + 1) * d], (x.shape[0], 1, d)) for i in range(n)]


def _modulate(h, shift, scale):
    return h * (scale + 1.0) + shift


def style_attention_block(params, cfg, i, tokens, cond_vec, K_s, V_s, hook=None, trace=None):
    """One block: x + g1*(SelfAttn(Q,K,V) + StyleAttn(Q,K_s,V_s)), then the MLP.

    Self-attention adds a learned per-head bias indexed by the (row, col)
    offset between query and key tokens. ``hook(i, q, k, v, bias)`` if given
    replaces the self-attention term only.
    """
    name = f"den.blocks.{i}"
    if K_s.shape[-1] != cfg.width or V_s.shape[-1] != cfg.width:
        raise nx.DimensionError(f"style K/V widths {K_s.shape}/{V_s.shape} do not match model width {cfg.width}")
    sh1, sc1, g1, sh2, sc2, g2 = _chunks(L.dense(params, f"{name}.mod", cond_vec), 6)
    h = _modulate(nx.layer_norm(tokens), sh1, sc1)
    q = L.dense(params, f"{name}.attn.q", h)
    k = L.dense(params, f"{name}.attn.k", h)
    v = L.dense(params, f"{name}.attn.v", h)
    bias = params[f"{name}.attn.rel"][:, rel_index(cfg)] * REL_SCALE
    self_out = L.mha(q, k, v, cfg.heads, bias=bias) if hook is None else hook(i, q, k, v, bias)
    style_out = L.mha(q, K_s, V_s, cfg.heads)
    if trace is not None:
        trace.blocks.append((q.data, k.data, v.data, self_out.data))
    attn = L.dense(params, f"{name}.attn.o", self_out) + L.dense(params, f"{name}.style.o", style_out)
    tokens = tokens + g1 * attn
    h2 = _modulate(nx.layer_norm(tokens), sh2, sc2)
    return tokens + g2 * L.mlp(params, f"{name}.mlp", h2)


def forward_velocity(params, cfg, xt, t, cond: ConditioningSet, K_s, V_s, hook=None, trace=False):
    """Velocity (B, 2H, W, 3) for states ``xt`` at times ``t`` (scalar or (B,)).

    Input channels per pixel: x_t, the known canvas outside the inpainting
    mask (model space), and the mask itself.
    """
    xt = xt if isinstance(xt, Tensor) else Tensor(xt)
    B = xt.shape[0]
    H, W = cfg.canvas_hw
    if xt.shape != (B, H, W, 3):
        raise nx.DimensionError(f"state {xt.shape} does not match canvas {(B, H, W, 3)}")
    if cond.concat_input.shape != (B, H, W, 3):
        raise nx.DimensionError(f"conditioning canvas {cond.concat_input.shape} does not match state {xt.shape}")
    m = cond.inpaint_mask[..., None]
    known = to_model(cond.concat_input) * (1.0 - m)
    x = nx.concat([xt, Tensor(known), Tensor(m)], axis=-1)
    tokens = L.dense(params, "den.embed", nx.patchify(x, cfg.patch))
    tokens = tokens + position_table(cfg) + L.dense(params, "den.half", Tensor(half_flag(cfg)))

    t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64), (B,))
    temb = L.timestep_embedding(t_arr, cfg.time_dim)
    cond_vec = nx.silu(L.dense(params, "den.t.fc2", nx.silu(L.dense(params, "den.t.fc1", Tensor(temb)))))

    tr = AttentionTrace() if trace else None
    for i in range(cfg.depth):
        tokens = style_attention_block(params, cfg, i, tokens, cond_vec, K_s, V_s, hook, tr)
    shift, scale = _chunks(L.dense(params, "den.final.mod", cond_vec), 2)
    out = L.dense(params, "den.final.out", _modulate(nx.layer_norm(tokens), shift, scale))
    v = nx.unpatchify(out, cfg.patch, H, W)
    return v, tr

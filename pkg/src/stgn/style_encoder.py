"""Dual-branch style encoder.

Textual branch: patch encoder -> self-attention refinement -> learned-query
adaptor. Visual branch: an independent patch encoder whose tokens feed both a
token-wise projector (pooled to the query count) and a second learned-query
adaptor; the two are summed. The branches are fused by cross-attention with
the textual output as queries, then projected to style key/value tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stgn import layers as L
from stgn import numerics as nx
from stgn.numerics import Tensor

# Parameter groups by prefix. E_TEXT / E_VIS are frozen after pretraining.
E_TEXT = ("enc.text.embed", "enc.text.blocks")
E_VIS = ("enc.vis.embed", "enc.vis.blocks")
SEG_HEAD = ("enc.seg",)
ENCODER_TRAINABLE = ("enc.text.refine", "enc.text.qformer", "enc.vis.proj", "enc.vis.qformer", "enc.fuse", "enc.kv")


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 32
    patch: int = 4
    width: int = 64
    heads: int = 4
    depth_text: int = 2
    depth_vis: int = 2
    depth_refine: int = 1
    n_queries: int = 8
    kv_width: int = 64  # heads * head_dim of the denoiser's attention
    seg_channels: int = 16

    @property
    def grid(self):
        return self.image_size // self.patch

    @property
    def n_tokens(self):
        return self.grid**2


@dataclass
class StyleEmbedding:
    h_text: Tensor
    h_vis: Tensor
    z_style: Tensor
    K_s: Tensor
    V_s: Tensor

    def detach(self):
        return StyleEmbedding(*(Tensor(t.data) for t in (self.h_text, self.h_vis, self.z_style, self.K_s, self.V_s)))

    def take(self, idx):
        return StyleEmbedding(*(Tensor(t.data[idx]) for t in (self.h_text, self.h_vis, self.z_style, self.K_s, self.V_s)))


def select(params, prefixes):
    return {k: v for k, v in params.items() if k.startswith(tuple(prefixes))}


def init_encoder(rng, cfg: EncoderConfig = EncoderConfig()):
    params = {}
    d, pdim = cfg.width, cfg.patch * cfg.patch * 3
    for branch, depth in (("text", cfg.depth_text), ("vis", cfg.depth_vis)):
        r = rng.child(f"enc.{branch}")
        L.init_dense(params, r.child("embed"), f"enc.{branch}.embed", pdim, d)
        for i in range(depth):
            L.init_block(params, r.child(f"block{i}"), f"enc.{branch}.blocks.{i}", d)
    r = rng.child("enc.heads")
    for i in range(cfg.depth_refine):
        L.init_block(params, r.child(f"refine{i}"), f"enc.text.refine.{i}", d)
    L.init_qformer(params, r.child("qtext"), "enc.text.qformer", d, cfg.n_queries)
    L.init_mlp(params, r.child("pvis"), "enc.vis.proj", d, 2 * d)
    L.init_qformer(params, r.child("qvis"), "enc.vis.qformer", d, cfg.n_queries)
    for proj in ("q", "k", "v"):
        L.init_dense(params, r.child(f"fuse{proj}"), f"enc.fuse.{proj}", d, d)
    L.init_dense(params, r.child("kvk"), "enc.kv.k", d, cfg.kv_width)
    L.init_dense(params, r.child("kvv"), "enc.kv.v", d, cfg.kv_width)
    # Segmentation decoder: two stride-2 transposed convolutions (kernel 2).
    c = cfg.seg_channels
    L.init_dense(params, r.child("seg1"), "enc.seg.up1", d, 4 * c)
    L.init_dense(params, r.child("seg2"), "enc.seg.up2", c, 4 * 3)
    params["enc.seg.up2.b"].data[:] = 0.5
    return params


def _check_image(img, cfg):
    img = nx.Tensor(img) if not isinstance(img, Tensor) else img
    if img.ndim == 3:
        img = nx.reshape(img, (1,) + img.shape)
    B, H, W, C = img.shape
    if C != 3 or H % cfg.patch or W % cfg.patch:
        raise nx.DimensionError(f"style image {img.shape} must be (B,H,W,3) with sides divisible by {cfg.patch}")
    if H * W // cfg.patch**2 != cfg.n_tokens:
        raise nx.DimensionError(f"style image {H}x{W} does not match encoder size {cfg.image_size}")
    return img


def backbone(params, cfg, img, branch):
    """E_text or E_vis: patch embedding + positions + transformer blocks."""
    img = _check_image(img, cfg)
    tokens = L.dense(params, f"enc.{branch}.embed", nx.patchify(img - 0.5, cfg.patch))
    tokens = tokens + L.sincos_2d(cfg.grid, cfg.grid, cfg.width)
    depth = cfg.depth_text if branch == "text" else cfg.depth_vis
    for i in range(depth):
        tokens = L.block(params, f"enc.{branch}.blocks.{i}", tokens, cfg.heads)
    return tokens


def encode_textual(params, cfg, img=None, tokens=None):
    """h_text = Q_text(S_text(E_text(img))). Pass ``tokens`` to reuse E_text output."""
    if tokens is None:
        tokens = backbone(params, cfg, img, "text")
    for i in range(cfg.depth_refine):
        tokens = L.block(params, f"enc.text.refine.{i}", tokens, cfg.heads)
    return L.qformer(params, "enc.text.qformer", tokens, cfg.heads)


def project_visual(params, cfg, tokens):
    """P_vis: token-wise MLP, then contiguous grouped means down to n_q rows."""
    B, n, d = tokens.shape
    if n % cfg.n_queries:
        raise nx.DimensionError(f"{n} tokens cannot be pooled into {cfg.n_queries} groups")
    proj = L.mlp(params, "enc.vis.proj", tokens)
    return nx.mean(nx.reshape(proj, (B, cfg.n_queries, n // cfg.n_queries, d)), axis=2)


def encode_visual(params, cfg, img=None, tokens=None):
    """h_vis = P_vis(E_vis(img)) + Q_vis(E_vis(img)), E_vis evaluated once."""
    if tokens is None:
        tokens = backbone(params, cfg, img, "vis")
    return project_visual(params, cfg, tokens) + L.qformer(params, "enc.vis.qformer", tokens, cfg.heads)


def fuse_styles(params, h_text, h_vis):
    """z_style = Attn(h_text, h_vis, h_vis) after learned q/k/v projections."""
    if h_text.shape[-1] != h_vis.shape[-1]:
        raise nx.DimensionError(f"h_text{h_text.shape} and h_vis{h_vis.shape} widths differ")
    return nx.attention(
        L.dense(params, "enc.fuse.q", h_text),
        L.dense(params, "enc.fuse.k", h_vis),
        L.dense(params, "enc.fuse.v", h_vis),
    )


def style_kv(params, z_style):
    return L.dense(params, "enc.kv.k", z_style), L.dense(params, "enc.kv.v", z_style)


def encode(params, cfg, img=None, text_tokens=None, vis_tokens=None) -> StyleEmbedding:
    h_text = encode_textual(params, cfg, img, text_tokens)
    h_vis = encode_visual(params, cfg, img, vis_tokens)
    z = fuse_styles(params, h_text, h_vis)
    K_s, V_s = style_kv(params, z)
    return StyleEmbedding(h_text, h_vis, z, K_s, V_s)


def frozen_tokens(params, cfg, imgs, chunk=64):
    """E_text and E_vis outputs as plain arrays (no tape), computed in chunks."""
    imgs = np.asarray(imgs, dtype=np.float64)
    text, vis = [], []
    with nx.no_grad():
        for i in range(0, len(imgs), chunk):
            part = imgs[i : i + chunk]
            text.append(backbone(params, cfg, part, "text").data)
            vis.append(backbone(params, cfg, part, "vis").data)
    return np.concatenate(text), np.concatenate(vis)


def seg_decode(params, cfg, tokens):
    """Decode E_text tokens to a (B, H, W, 3) style-preserving segmentation."""
    B, n, d = tokens.shape
    g, c = cfg.grid, cfg.seg_channels
    h = nx.gelu(L.dense(params, "enc.seg.up1", tokens))
    h = nx.reshape(nx.transpose(nx.reshape(h, (B, g, g, 2, 2, c)), (0, 1, 3, 2, 4, 5)), (B, 2 * g, 2 * g, c))
    h = L.dense(params, "enc.seg.up2", h)
    h = nx.transpose(nx.reshape(h, (B, 2 * g, 2 * g, 2, 2, 3)), (0, 1, 3, 2, 4, 5))
    return nx.reshape(h, (B, 4 * g, 4 * g, 3))


def seg_target(img, text_mask, fill=0.5):
    """Text pixels keep their appearance, background becomes neutral grey."""
    img = np.asarray(img, dtype=np.float64)
    m = np.asarray(text_mask, dtype=np.float64)
    if m.shape != img.shape[:-1]:
        raise nx.DimensionError(f"text mask {m.shape} does not match image {img.shape}")
    m = m[..., None]
    return m * img + (1 - m) * fill


def segmentation_pretrain_loss(params, cfg, img, text_mask):
    """MSE between the decoded segmentation of E_text tokens and the target."""
    img = np.asarray(img, dtype=np.float64)
    target = seg_target(img, text_mask)
    if img.ndim == 3:
        img, target = img[None], target[None]
    pred = seg_decode(params, cfg, backbone(params, cfg, img, "text"))
    return nx.mse(pred, target)

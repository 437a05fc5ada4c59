"""Inference-time style injection against an inverted reference.

During the first ``gate_steps`` sampling steps every block's self-attention
is replaced: keys/values are AdaIN-shifted toward the reference's cached
keys/values (text tokens only) inside the generation mask, a second
attention reads the reference text tokens directly, and the base output is
AdaIN-shifted toward that second output inside the generation mask.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from stgn import flow
from stgn import layers as L
from stgn import numerics as nx
from stgn.denoiser import ConditioningSet, to_model
from stgn.flow import ConfigurationError
from stgn.numerics import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InjectionConfig:
    gate_steps: int = 10
    enabled: bool = True
    mask_threshold: float = 0.5

    def active_steps(self, num_steps):
        if not 0 <= self.gate_steps <= num_steps:
            raise ConfigurationError(f"gate_steps {self.gate_steps} outside [0, {num_steps}]")
        return self.gate_steps if self.enabled else 0


@dataclass
class TokenMasks:
    m_gen_tok: np.ndarray  # (B, n) over generation canvas tokens
    m_style_tok: np.ndarray  # (B, n) over reference canvas tokens
    threshold: float = 0.5

    def __post_init__(self):
        self.m_gen_tok = np.atleast_2d(np.asarray(self.m_gen_tok, dtype=np.float64))
        self.m_style_tok = np.atleast_2d(np.asarray(self.m_style_tok, dtype=np.float64))
        for name in ("m_gen_tok", "m_style_tok"):
            m = getattr(self, name)
            if np.any(m < 0) or np.any(m > 1):
                raise ValueError(f"{name} values must lie in [0, 1]")

    @property
    def style_keep(self):
        return self.m_style_tok >= self.threshold

    @property
    def has_style(self):
        """Per-sample flag: the reference mask selects at least one token."""
        return self.style_keep.any(axis=-1)


def downsample_mask(mask, patch):
    """Area-average a (..., H, W) pixel mask onto the patch grid, flattened row-major."""
    mask = np.asarray(mask, dtype=np.float64)
    H, W = mask.shape[-2:]
    if H % patch or W % patch:
        raise nx.DimensionError(f"mask {H}x{W} not divisible by patch {patch}")
    tok = nx.area_downsample(mask, patch).data
    return tok.reshape(mask.shape[:-2] + ((H // patch) * (W // patch),))


def _blend(a, b, m):
    """(1 - m) a + m b with a token mask m (B, n)."""
    m3 = m[..., None]
    return a * (1.0 - m3) + b * m3


def _safe_keep(masks):
    # rows without any style token get a dummy all-ones mask; their result is discarded
    keep = masks.style_keep
    ok = masks.has_style
    return np.where(ok[:, None], keep, True).astype(np.float64), ok


def _gen_weight(masks):
    """Generation mask with injection switched off for samples lacking a style region."""
    ok = masks.has_style
    return masks.m_gen_tok * ok[:, None]


def adapt_kv(K, V, entry, masks: TokenMasks):
    """AdaIN keys/values toward the reference's text-token moments, blended by m_gen."""
    K_s, V_s = entry
    K, V = nx.Tensor(K) if not isinstance(K, Tensor) else K, nx.Tensor(V) if not isinstance(V, Tensor) else V
    if K.shape[-1] != np.shape(K_s)[-1] or V.shape[-1] != np.shape(V_s)[-1]:
        raise nx.DimensionError(f"K/V widths {K.shape}/{V.shape} do not match cache {np.shape(K_s)}/{np.shape(V_s)}")
    keep, _ = _safe_keep(masks)
    K_t = nx.adain(K, K_s, keep)
    V_t = nx.adain(V, V_s, keep)
    m = _gen_weight(masks)
    return _blend(K, K_t, m), _blend(V, V_t, m)


def injected_attention(Q, K, V, entry, masks: TokenMasks, heads, bias=None):
    """Replacement for a block's self-attention output (merged heads, (B, n, d)).

    ``bias`` is the block's relative-position bias; it applies to the base
    attention only, since reference text tokens sit at unrelated offsets.
    """
    K_s, V_s = (nx.as_tensor(a) for a in entry)
    K2, V2 = adapt_kv(K, V, (K_s, V_s), masks)
    f_base = L.mha(Q, K2, V2, heads, bias=bias)
    keep, _ = _safe_keep(masks)
    f_style = L.mha(Q, K_s, V_s, heads, key_mask=keep > 0)
    mu, sd = nx.masked_moments(f_style, keep)
    return _blend(f_base, nx.adain_to(f_base, mu, sd), _gen_weight(masks))


@dataclass
class InjectionHooks:
    """Per-step self-attention overrides consuming an inversion cache."""

    cache: flow.InversionCache
    masks: TokenMasks
    heads: int
    gate_steps: int
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.cache.steps_recorded < self.gate_steps:
            raise ConfigurationError(f"cache holds {self.cache.steps_recorded} steps, gate needs {self.gate_steps}")
        missing = np.flatnonzero(~self.masks.has_style)
        if len(missing):
            msg = f"empty style mask for batch rows {missing.tolist()}; injection skipped for them"
            self.warnings.append(msg)
            log.warning(msg)

    def for_step(self, s, grid):
        if s >= self.gate_steps:
            return None
        entry = self.cache.entry(s, grid)

        def hook(i, q, k, v, bias=None):
            return injected_attention(q, k, v, entry.kv[i], self.masks, self.heads, bias)

        return hook


@dataclass
class Reference:
    """A style reference rendered on its own canvas (glyph half + scene half)."""

    concat: np.ndarray  # (B, 2H, W, 3)
    inpaint: np.ndarray  # (B, 2H, W)
    scene: np.ndarray  # (B, H, W, 3)
    texts: list
    text_mask: np.ndarray | None = None  # (B, H, W), optional ground truth

    def conditioning(self):
        return ConditioningSet(self.concat, self.inpaint, self.texts, self.scene)

    @property
    def scene_region(self):
        H = self.scene.shape[1]
        return self.inpaint[:, H:]


def truth_masks(ref: Reference):
    if ref.text_mask is None:
        raise ConfigurationError("reference has no ground-truth text mask")
    return np.asarray(ref.text_mask, dtype=np.float64)


def dilate(mask, radius=1):
    """Binary dilation with a (2r+1) square over the last two axes."""
    m = np.asarray(mask, dtype=bool)
    out = m.copy()
    H, W = m.shape[-2:]
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            src = m[..., max(-dy, 0) : H - max(dy, 0), max(-dx, 0) : W - max(dx, 0)]
            out[..., max(dy, 0) : H - max(-dy, 0), max(dx, 0) : W - max(-dx, 0)] |= src
    return out


STYLE_GROW = 1  # 1-2 px strokes cover < half of a 4x4 patch; grow them into a text region


def token_masks(cond: ConditioningSet, m_style_scene, patch, threshold=0.5, grow=STYLE_GROW):
    """Generation and reference token masks on the canvas grid (glyph half is zero).

    The reference stroke mask is dilated by ``grow`` pixels before area pooling.
    """
    m_style_scene = dilate(m_style_scene, grow).astype(np.float64) if grow else np.asarray(m_style_scene, dtype=np.float64)
    canvas = np.concatenate([np.zeros_like(m_style_scene), m_style_scene], axis=1)
    return TokenMasks(downsample_mask(cond.inpaint_mask, patch), downsample_mask(canvas, patch), threshold)


def styled_sample(model, cond: ConditioningSet, ref: Reference, schedule, cfg: InjectionConfig, mask_source, rng=None, x1=None):
    """Sample with style injection; returns (canvas, hooks or None).

    ``mask_source(ref)`` gives the reference's (B, H, W) text mask. The start
    noise comes from ``x1`` when given, else from ``rng``.
    """
    gate = cfg.active_steps(schedule.num_steps)
    if gate == 0:
        return flow.euler_sample(model, cond, schedule, rng, x1=x1), None
    m_style = mask_source(ref)
    if m_style is None:
        raise ConfigurationError("mask source returned no reference text mask")
    masks = token_masks(cond, m_style, model.den_cfg.patch, cfg.mask_threshold)
    ref_cond = ref.conditioning()
    cache = flow.invert(model, to_model(ref.concat), ref_cond, schedule, gate, masks.m_style_tok)
    hooks = InjectionHooks(cache, masks, model.den_cfg.heads, gate)
    return flow.euler_sample(model, cond, schedule, rng, hooks=hooks, x1=x1), hooks

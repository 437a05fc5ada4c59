"""Bundles encoder + denoiser parameters into one velocity field."""

from __future__ import annotations

import numpy as np

from stgn import numerics as nx
from stgn import style_encoder as se
from stgn.denoiser import ConditioningSet, DenoiserConfig, forward_velocity, init_denoiser
from stgn.numerics import Rng


class StyleTextModel:
    """Velocity field v(x_t, t, c) with the style embedding computed from ``c.style_img``.

    Calling the model runs without a tape and returns numpy arrays; the style
    embedding for a given conditioning object is computed once and reused
    across integration steps.
    """

    def __init__(self, params, enc_cfg=se.EncoderConfig(), den_cfg=DenoiserConfig()):
        self.params = params
        self.enc_cfg = enc_cfg
        self.den_cfg = den_cfg
        self._style_cache = None

    @classmethod
    def initialize(cls, seed, enc_cfg=se.EncoderConfig(), den_cfg=DenoiserConfig()):
        if enc_cfg.kv_width != den_cfg.width:
            raise nx.DimensionError(f"encoder kv width {enc_cfg.kv_width} != denoiser width {den_cfg.width}")
        rng = Rng(seed).child("init")
        params = se.init_encoder(rng.child("encoder"), enc_cfg)
        params.update(init_denoiser(rng.child("denoiser"), den_cfg))
        return cls(params, enc_cfg, den_cfg)

    @property
    def depth(self):
        return self.den_cfg.depth

    def style(self, cond: ConditioningSet):
        return se.encode(
            self.params,
            self.enc_cfg,
            img=cond.style_img,
            text_tokens=None if cond.text_tokens is None else nx.Tensor(cond.text_tokens),
            vis_tokens=None if cond.vis_tokens is None else nx.Tensor(cond.vis_tokens),
        )

    def velocity(self, xt, t, cond, style, hook=None, trace=False):
        return forward_velocity(self.params, self.den_cfg, xt, t, cond, style.K_s, style.V_s, hook, trace)

    def _cached_style(self, cond):
        cached = self._style_cache
        if cached is not None and cached[0] is cond:
            return cached[1]
        style = self.style(cond).detach()
        self._style_cache = (cond, style)
        return style

    def __call__(self, x, t, cond, hook=None, trace=False):
        with nx.no_grad():
            style = self._cached_style(cond)
            v, tr = self.velocity(nx.Tensor(x), t, cond, style, hook, trace)
        return v.data, tr

    def n_params(self, prefixes=None):
        items = self.params.items() if prefixes is None else se.select(self.params, prefixes).items()
        return int(sum(np.prod(p.shape) for _, p in items))

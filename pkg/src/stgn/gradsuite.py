"""Finite-difference checks of every differentiable building block.

Each case maps one input tensor to a scalar through the operation under test,
contracted with a fixed random weight so gradients are O(1). Models are tiny
and every parameter (including zero-initialized gates) is randomized so that
all branches carry gradient.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from stgn import flow
from stgn import numerics as nx
from stgn import style_encoder as se
from stgn.denoiser import ConditioningSet, DenoiserConfig, forward_velocity, init_denoiser
from stgn.numerics import Rng, Tensor, grad_check
from stgn.style_loss import FeaturePyramid, tsc_loss

TOLERANCE = 1e-4


@dataclass
class GradResult:
    name: str
    max_rel_err: float
    seconds: float

    @property
    def passed(self):
        return self.max_rel_err < TOLERANCE


def _contract(rng, shape):
    w = Tensor(rng.normal(shape))
    return lambda y: nx.tsum(y * w)


def _randomize(params, rng, scale=0.3):
    for k, p in sorted(params.items()):
        p.data = rng.child(k).normal(p.shape, scale)
        if k.endswith(".g"):
            p.data += 1.0


def tiny_denoiser(depth=2, scene=8, seed=0):
    cfg = DenoiserConfig(scene_size=scene, patch=4, width=8, heads=2, depth=depth, mlp_ratio=2, time_dim=8)
    rng = Rng(seed).child("gradsuite")
    params = init_denoiser(rng.child("init"), cfg)
    _randomize(params, rng.child("rand"))
    H, W = cfg.canvas_hw
    concat = rng.child("c").uniform(size=(1, H, W, 3))
    mask = np.zeros((1, H, W))
    mask[:, H // 2 + 1 : H - 1, 1 : W - 1] = 1.0
    cond = ConditioningSet(concat, mask, ["LT"], rng.child("s").uniform(size=(1, scene, scene, 3)))
    K_s = rng.child("k").normal((1, 3, cfg.width))
    V_s = rng.child("v").normal((1, 3, cfg.width))
    return cfg, params, cond, K_s, V_s


def tiny_encoder(seed=0):
    cfg = se.EncoderConfig(image_size=8, patch=4, width=8, heads=2, depth_text=1, depth_vis=1, depth_refine=1,
                           n_queries=2, kv_width=8, seg_channels=4)  # fmt: skip
    rng = Rng(seed).child("gradsuite-enc")
    params = se.init_encoder(rng.child("init"), cfg)
    _randomize(params, rng.child("rand"))
    return cfg, params


def cases(seed=0):
    """List of (name, f, x) triples."""
    rng = Rng(seed).child("cases")
    out = []

    q, k, v = (rng.child(n).uniform(-1, 1, (2, 3, 4)) for n in "qkv")
    c = _contract(rng.child("att"), (2, 3, 4))
    out.append(("attention/q", lambda x: c(nx.attention(x, Tensor(k), Tensor(v))), q))
    out.append(("attention/k", lambda x: c(nx.attention(Tensor(q), x, Tensor(v))), k))
    out.append(("attention/v", lambda x: c(nx.attention(Tensor(q), Tensor(k), x)), v))
    bias = rng.child("bias").uniform(-1, 1, (3, 3))
    out.append(("attention/bias", lambda x: c(nx.attention(Tensor(q), Tensor(k), Tensor(v), bias=x)), bias))

    xa = rng.child("ax").uniform(-1, 1, (6, 3))
    ra = rng.child("ar").uniform(-1, 1, (5, 3))
    ma = np.array([1, 0.7, 0.2, 1, 0.6])
    ca = _contract(rng.child("adain"), (6, 3))
    out.append(("adain/x", lambda x: ca(nx.adain(x, Tensor(ra), ma)), xa))
    out.append(("adain/ref", lambda x: ca(nx.adain(Tensor(xa), x, ma)), ra))

    f = rng.child("gram").uniform(-1, 1, (4, 7))
    cg = _contract(rng.child("gramw"), (4, 4))
    out.append(("gram_matrix", lambda x: cg(nx.gram_matrix(x)), f))

    xl = rng.child("ln").uniform(-1, 1, (3, 8))
    gam, bet = rng.child("g").uniform(0.5, 1.5, 8), rng.child("b").uniform(-1, 1, 8)
    cl = _contract(rng.child("lnw"), (3, 8))
    out.append(("layer_norm/x", lambda x: cl(nx.layer_norm(x, Tensor(gam), Tensor(bet))), xl))
    out.append(("layer_norm/gamma", lambda x: cl(nx.layer_norm(Tensor(xl), x, Tensor(bet))), gam))

    xc = rng.child("cx").uniform(-1, 1, (1, 6, 6, 2))
    wc = rng.child("cw").uniform(-1, 1, (3, 3, 2, 3))
    cc = _contract(rng.child("cc"), (1, 3, 3, 3))
    out.append(("conv2d/x", lambda x: cc(nx.conv2d(x, Tensor(wc), stride=2, padding=1)), xc))
    out.append(("conv2d/w", lambda x: cc(nx.conv2d(Tensor(xc), x, stride=2, padding=1)), wc))

    xg = rng.child("gl").uniform(-1, 1, (2, 5))
    cgl = _contract(rng.child("glw"), (2, 5))
    out.append(("gelu", lambda x: cgl(nx.gelu(x)), xg))
    out.append(("softmax", lambda x: cgl(nx.softmax(x)), xg))

    # style loss on an 8x8 pair
    pyr = FeaturePyramid()
    gen = rng.child("tg").uniform(0, 1, (8, 8, 3))
    ref = rng.child("tr").uniform(0, 1, (8, 8, 3))
    mg = (rng.child("tmg").uniform(size=(8, 8)) > 0.3).astype(float)
    mr = (rng.child("tmr").uniform(size=(8, 8)) > 0.3).astype(float)
    out.append(("tsc_loss", lambda x: tsc_loss(x, mg, ref, mr, pyr), gen))

    # flow-matching loss through a 1-block denoiser on a 4x4 scene
    cfg1 = DenoiserConfig(scene_size=4, patch=2, width=8, heads=2, depth=1, mlp_ratio=2, time_dim=8)
    rng1 = Rng(seed).child("gradsuite-cfm")
    p1 = init_denoiser(rng1.child("init"), cfg1)
    _randomize(p1, rng1.child("rand"))
    H1, W1 = cfg1.canvas_hw
    m1 = np.zeros((1, H1, W1))
    m1[:, H1 // 2 :, :] = 1.0
    cond1 = ConditioningSet(rng1.child("c").uniform(size=(1, H1, W1, 3)), m1, ["L"], np.zeros((1, 4, 4, 3)))
    ks1, vs1 = rng1.child("k").normal((1, 2, 8)), rng1.child("v").normal((1, 2, 8))
    x0 = rng1.child("x0").uniform(-1, 1, (1, H1, W1, 3))
    eps = rng1.child("eps").normal((1, H1, W1, 3))

    def cfm_through(x):
        st = flow.interpolate(x0, eps, 0.4)
        v, _ = forward_velocity(p1, cfg1, x, 0.4, cond1, Tensor(ks1), Tensor(vs1))
        return flow.cfm_loss(v, st)

    out.append(("cfm_loss/1-block", cfm_through, flow.interpolate(x0, eps, 0.4).xt))

    # full 2-block denoiser on an 8x8 scene: w.r.t. state, style K/V and a few weights
    cfg2, p2, cond2, ks2, vs2 = tiny_denoiser(depth=2, scene=8, seed=seed)
    H2, W2 = cfg2.canvas_hw
    xt2 = Rng(seed).child("xt2").normal((1, H2, W2, 3))
    c2 = _contract(Rng(seed).child("c2"), (1, H2, W2, 3))

    def den(xt=None, ks=None, vs=None):
        v, _ = forward_velocity(p2, cfg2, xt if xt is not None else Tensor(xt2), 0.3, cond2,
                                ks if ks is not None else Tensor(ks2), vs if vs is not None else Tensor(vs2))  # fmt: skip
        return c2(v)

    out.append(("denoiser/x_t", lambda x: den(xt=x), xt2))
    out.append(("denoiser/K_s", lambda x: den(ks=x), ks2))
    out.append(("denoiser/V_s", lambda x: den(vs=x), vs2))
    for name in ("den.blocks.1.style.o.w", "den.blocks.0.mod.w", "den.blocks.0.attn.rel", "den.embed.w", "den.half.w"):
        out.append((f"denoiser/{name}", _param_case(p2, name, den), p2[name].data.copy()))

    # encoder heads and fusion
    ecfg, ep = tiny_encoder(seed)
    img = Rng(seed).child("eimg").uniform(size=(1, 8, 8, 3))
    ce = _contract(Rng(seed).child("ce"), (1, 2, 8))
    out.append(("encoder/K_s(img)", lambda x: ce(se.encode(ep, ecfg, img=x).K_s), img))
    seg_mask = (Rng(seed).child("em").uniform(size=(1, 8, 8)) > 0.5).astype(float)
    seg = lambda: se.segmentation_pretrain_loss(ep, ecfg, img, seg_mask)  # noqa: E731
    for name in ("enc.seg.up1.w", "enc.text.blocks.0.attn.q.w"):
        out.append((f"seg_pretrain/{name}", _param_case(ep, name, seg), ep[name].data.copy()))
    return out


def _param_case(params, name, fn):
    """Scalar function of one named parameter, the rest held fixed."""

    def f(x):
        saved = params[name]
        params[name] = x
        try:
            return fn()
        finally:
            params[name] = saved

    return f


def run_suite(seed=0, h=1e-5):
    results = []
    for name, f, x in cases(seed):
        t0 = time.perf_counter()
        err = grad_check(f, x, h)
        results.append(GradResult(name, err, time.perf_counter() - t0))
    return results


def format_table(results):
    lines = [f"{'operation':36s} {'max_rel_err':>12s}  status"]
    for r in results:
        lines.append(f"{r.name:36s} {r.max_rel_err:12.3e}  {'ok' if r.passed else 'FAIL'}")
    return "\n".join(lines)

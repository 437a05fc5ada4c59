"""Encoder pretraining and the main flow-matching training loop."""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from stgn import checkpoint as ckpt
from stgn import flow
from stgn import numerics as nx
from stgn import style_encoder as se
from stgn.config import RunConfig
from stgn.denoiser import ConditioningSet, DenoiserConfig, to_model
from stgn.model import StyleTextModel
from stgn.numerics import NumericError, Rng, Tensor
from stgn.optim import AdamW
from stgn.style_loss import total_loss, tsc_loss

log = logging.getLogger(__name__)

MAIN_TRAINABLE = ("den.",) + se.ENCODER_TRAINABLE
PRETRAIN_TRAINABLE = se.E_TEXT + se.SEG_HEAD


def encoder_config(cfg: RunConfig) -> se.EncoderConfig:
    return se.EncoderConfig(
        image_size=cfg.image_size,
        patch=cfg.patch,
        width=cfg.width,
        heads=cfg.heads,
        depth_text=cfg.enc_depth_text,
        depth_vis=cfg.enc_depth_vis,
        depth_refine=cfg.enc_depth_refine,
        n_queries=cfg.n_queries,
        kv_width=cfg.width,
    )


def denoiser_config(cfg: RunConfig) -> DenoiserConfig:
    return DenoiserConfig(
        scene_size=cfg.image_size,
        patch=cfg.patch,
        width=cfg.width,
        heads=cfg.heads,
        depth=cfg.depth,
        mlp_ratio=cfg.mlp_ratio,
        time_dim=cfg.width,
    )


@dataclass
class TrainingData:
    """Stacked arrays for a list of records (targets plus their style references)."""

    concat: np.ndarray  # (N, 2H, W, 3)
    inpaint: np.ndarray  # (N, 2H, W)
    style: np.ndarray  # (N, H, W, 3)
    text_mask: np.ndarray  # (N, H, W) target text
    ref_mask: np.ndarray  # (N, H, W) reference text
    texts: list
    text_tokens: np.ndarray | None = None
    vis_tokens: np.ndarray | None = None

    @classmethod
    def from_records(cls, records):
        return cls(
            np.stack([r.concat for r in records]),
            np.stack([r.inpaint_mask for r in records]),
            np.stack([r.style_ref for r in records]),
            np.stack([r.text_mask for r in records]).astype(np.float64),
            np.stack([r.ref.text_mask for r in records]).astype(np.float64),
            [r.text for r in records],
        )

    def __len__(self):
        return len(self.concat)

    def attach_tokens(self, params, enc_cfg):
        self.text_tokens, self.vis_tokens = se.frozen_tokens(params, enc_cfg, self.style)

    def cond(self, idx) -> ConditioningSet:
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return ConditioningSet(
            self.concat[idx],
            self.inpaint[idx],
            [self.texts[i] for i in idx],
            self.style[idx],
            pick(self.text_tokens),
            pick(self.vis_tokens),
        )


def _collect_grads(params):
    grads = {}
    for k, p in params.items():
        if p.grad is not None:
            grads[k] = p.grad
            p.grad = None
    return grads


def _add_grads(acc, new, scale):
    for k, g in new.items():
        acc[k] = acc[k] + scale * g if k in acc else scale * g


# -- encoder pretraining ------------------------------------------------------
def pretrain_encoder(params, enc_cfg, images, masks, steps, lr, batch, seed, weight_decay=0.0, start=0, opt=None):
    """Segmentation pretraining of E_text + seg head. Returns (losses, optimizer)."""
    trainable = se.select(params, PRETRAIN_TRAINABLE)
    opt = opt or AdamW(trainable, lr=lr, weight_decay=weight_decay)
    rng = Rng(seed).child("pretrain")
    losses = []
    for step in range(start, steps):
        idx = rng.child(step).integers(0, len(images), size=batch)
        loss = se.segmentation_pretrain_loss(params, enc_cfg, images[idx], masks[idx])
        if not np.isfinite(loss.data):
            raise NumericError(f"non-finite pretraining loss at step {step}")
        loss.backward()
        grads = _collect_grads(params)
        opt.step({k: grads[k] for k in trainable if k in grads})
        losses.append(float(loss.data))
    return losses, opt


# -- main training ------------------------------------------------------------
def masked_noise(eps, x0, mask):
    """Noise inside the inpainting region, clean values elsewhere."""
    m = mask[..., None]
    return m * eps + (1.0 - m) * x0


def batch_objective(model: StyleTextModel, data: TrainingData, idx, t, eps, lambda_tsc):
    """Objective Tensor and LossReport for one (micro-)batch."""
    cond = data.cond(idx)
    x0 = to_model(cond.concat_input)
    state = flow.interpolate(x0, masked_noise(eps, x0, cond.inpaint_mask), t)
    style = model.style(cond)
    v, _ = model.velocity(Tensor(state.xt), state.t, cond, style)
    l_cfm = flow.cfm_loss(v, state)
    H = model.den_cfg.scene_size

    def scene_pred(v_):
        x0_hat = flow.predict_clean(state.xt, v_, state.t)
        return (x0_hat[:, H:] + 1.0) * 0.5

    if not np.isfinite(l_cfm.data):
        raise NumericError(f"non-finite loss (l_cfm={float(l_cfm.data)})")
    if lambda_tsc:
        l_tsc = tsc_loss(scene_pred(v), data.text_mask[idx], data.style[idx], data.ref_mask[idx])
    else:
        # logged only; no gradient contribution
        with nx.no_grad():
            l_tsc = tsc_loss(scene_pred(v.data), data.text_mask[idx], data.style[idx], data.ref_mask[idx])
        l_tsc = float(l_tsc.data)
    if not np.isfinite(l_tsc.data if isinstance(l_tsc, Tensor) else l_tsc):
        raise NumericError(f"non-finite loss (l_cfm={float(l_cfm.data)}, l_tsc={l_tsc})")
    return total_loss(l_cfm, l_tsc, lambda_tsc)


@dataclass
class StepDraw:
    idx: np.ndarray
    t: np.ndarray
    eps: np.ndarray


def draw_step(seed, step, n_data, size, canvas_shape):
    """All randomness of one optimizer step, drawn up front for the whole effective batch."""
    rng = Rng(seed).child("train").child(step)
    idx = rng.child("idx").integers(0, n_data, size=size)
    t = rng.child("t").uniform(size=size)
    eps = rng.child("eps").normal((size,) + tuple(canvas_shape))
    return StepDraw(idx, t, eps)


@dataclass
class TrainState:
    model: StyleTextModel
    opt: AdamW
    step: int = 0
    history: list = field(default_factory=list)  # (step, LossReport)


def new_train_state(model, cfg: RunConfig):
    trainable = se.select(model.params, MAIN_TRAINABLE)
    opt = AdamW(trainable, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay)
    return TrainState(model, opt)


def accumulated_gradients(model, data, draw: StepDraw, accum, lambda_tsc):
    """Mean gradient over ``accum`` equal micro-batches (equals one big-batch gradient)."""
    n = len(draw.idx)
    if n % accum:
        raise ValueError(f"effective batch {n} not divisible by accumulation {accum}")
    micro = n // accum
    grads, reports = {}, []
    for a in range(accum):
        sl = slice(a * micro, (a + 1) * micro)
        obj, rep = batch_objective(model, data, draw.idx[sl], draw.t[sl], draw.eps[sl], lambda_tsc)
        if not np.isfinite(rep.total):
            raise NumericError(f"non-finite loss (l_cfm={rep.l_cfm}, l_tsc={rep.l_tsc})")
        obj.backward()
        _add_grads(grads, _collect_grads(model.params), 1.0 / accum)
        reports.append(rep)
    mean = lambda key: float(np.mean([getattr(r, key) for r in reports]))  # noqa: E731
    _, report = total_loss(mean("l_cfm"), mean("l_tsc"), lambda_tsc)
    return grads, report


def train_steps(state: TrainState, data: TrainingData, cfg: RunConfig, until: int, on_step=None):
    model = state.model
    canvas = model.den_cfg.canvas_hw + (3,)
    trainable = state.opt.params
    while state.step < until:
        draw = draw_step(cfg.seed, state.step, len(data), cfg.batch * cfg.accum, canvas)
        try:
            grads, report = accumulated_gradients(model, data, draw, cfg.accum, cfg.lambda_tsc)
        except NumericError as exc:
            raise NumericError(f"step {state.step}: {exc}") from exc
        state.opt.step({k: g for k, g in grads.items() if k in trainable})
        state.history.append((state.step, report))
        if on_step is not None:
            on_step(state, report)
        state.step += 1
    return state


# -- checkpoints --------------------------------------------------------------
def save_model(path, model: StyleTextModel, cfg: RunConfig, step=0, opt: AdamW | None = None, kind="model"):
    tensors = {k: p.data for k, p in model.params.items()}
    if opt is not None:
        tensors.update(opt.state_arrays())
    meta = {
        "kind": kind,
        "step": step,
        "opt_t": opt.t if opt is not None else 0,
        "encoder": asdict(model.enc_cfg),
        "denoiser": asdict(model.den_cfg),
        "lambda_tsc": cfg.lambda_tsc,
    }
    rng_state = {"seed": cfg.seed, "next_step": step}
    ckpt.save(path, tensors, cfg.hash(), rng_state, meta)


def load_model(path, expect_cfg: RunConfig | None = None):
    """Returns (model, tensors, header)."""
    tensors, header = ckpt.load(path)
    meta = header["meta"]
    enc_cfg = se.EncoderConfig(**meta["encoder"])
    den_cfg = DenoiserConfig(**meta["denoiser"])
    if expect_cfg is not None:
        want_e, want_d = encoder_config(expect_cfg), denoiser_config(expect_cfg)
        if want_e != enc_cfg or want_d != den_cfg:
            raise ckpt.CheckpointError(
                f"{path}: checkpoint geometry {asdict(enc_cfg)}/{asdict(den_cfg)} does not match the config"
            )
    params = {k: Tensor(v, requires_grad=True, name=k) for k, v in tensors.items() if not k.startswith("opt.")}
    return StyleTextModel(params, enc_cfg, den_cfg), tensors, header


def restore_train_state(path, cfg):
    model, tensors, header = load_model(path, cfg)
    state = new_train_state(model, cfg)
    state.opt.load_state_arrays(tensors, header["meta"]["opt_t"])
    state.step = int(header["meta"]["step"])
    return state


def format_report(step, rep):
    return f"step={step}\tl_cfm={rep.l_cfm:.6f}\tl_tsc={rep.l_tsc:.6f}\tlambda_tsc={rep.lambda_tsc:g}\ttotal={rep.total:.6f}"


def run_training(cfg: RunConfig, data: TrainingData, model: StyleTextModel, out_dir, state=None, log_path=None):
    """Full main-phase loop with periodic checkpoints and a loss log."""
    if model.enc_cfg != encoder_config(cfg) or model.den_cfg != denoiser_config(cfg):
        raise ckpt.CheckpointError("model geometry does not match the run config")
    # tokens depend on this model's frozen backbones; never reuse another model's
    data.attach_tokens(model.params, model.enc_cfg)
    state = state or new_train_state(model, cfg)
    os.makedirs(out_dir, exist_ok=True)
    log_path = log_path or os.path.join(out_dir, "train_log.tsv")
    mode = "a" if state.step else "w"
    with open(log_path, mode, encoding="utf-8") as fh:
        if not state.step:
            fh.write(f"# config_hash={cfg.hash()}\n")

        def on_step(st, rep):
            s = st.step
            if s % cfg.log_every == 0 or s == cfg.train_steps - 1:
                line = format_report(s, rep)
                fh.write(line + "\n")
                fh.flush()
                log.info(line)
            if cfg.ckpt_every and (s + 1) % cfg.ckpt_every == 0 and s + 1 < cfg.train_steps:
                save_model(os.path.join(out_dir, "model.ckpt"), model, cfg, s + 1, st.opt)

        train_steps(state, data, cfg, cfg.train_steps, on_step)
    save_model(os.path.join(out_dir, "model.ckpt"), model, cfg, state.step, state.opt)
    return state

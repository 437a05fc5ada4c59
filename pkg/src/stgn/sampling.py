"""Glue between sample records, the model, and the injection sampler."""

from __future__ import annotations

import numpy as np

from stgn import evalbench
from stgn.denoiser import ConditioningSet, to_image
from stgn.flow import FlowSchedule
from stgn.injection import InjectionConfig, Reference, styled_sample
from stgn.numerics import Rng


def conditioning(records) -> ConditioningSet:
    return ConditioningSet(
        np.stack([r.concat for r in records]),
        np.stack([r.inpaint_mask for r in records]),
        [r.text for r in records],
        np.stack([r.style_ref for r in records]),
    )


def reference(records) -> Reference:
    refs = [r.ref for r in records]
    return Reference(
        np.stack([r.concat for r in refs]),
        np.stack([r.inpaint_mask for r in refs]),
        np.stack([r.scene for r in refs]),
        [r.text for r in refs],
        np.stack([r.text_mask for r in refs]).astype(np.float64),
    )


def segmented_mask_source(records):
    """Reference text masks from the threshold segmenter (no generator truth)."""

    def source(ref):
        return np.stack([evalbench.segment_text(r.ref.scene, r.ref.box) for r in records]).astype(np.float64)

    return source


def start_noise(seed, records, canvas_shape):
    """Per-record start noise, independent of batching."""
    return np.stack([Rng(seed).child("sample").child(r.id).normal(canvas_shape) for r in records])


def sample_records(model, records, schedule: FlowSchedule, inj: InjectionConfig, seed):
    """Generated canvases in image space (B, 2H, W, 3) plus injection hooks (or None)."""
    cond = conditioning(records)
    x1 = start_noise(seed, records, cond.concat_input.shape[1:])
    x, hooks = styled_sample(
        model, cond, reference(records), schedule, inj, segmented_mask_source(records), x1=x1
    )
    return np.clip(to_image(x), 0.0, 1.0), hooks


def make_generate_fn(model, schedule, inj, seed):
    H = model.den_cfg.scene_size

    def generate(records, chunk_index):
        canvas, _ = sample_records(model, records, schedule, inj, seed)
        return canvas[:, H:]

    return generate

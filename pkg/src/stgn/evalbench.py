"""Recognition and style metrics, and the four-setting benchmark runner.

The recognizer is a nearest-template decoder over the known glyph rasters and
the segmenter is a colour-distance threshold against the local background.
Style distances use the frozen conv pyramid's last layer; they are proxies
and are labelled as such in reports.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from stgn import _kernels
from stgn import numerics as nx
from stgn.synthdata import ALPHABET, CELL, SETTINGS, templates
from stgn.synthdata.render import LineBox

SEG_THRESHOLD = 0.15
RING = 2
FRECHET_EPS = 1e-6
MIN_FRECHET_BATCH = 2
RECOMMENDED_FRECHET_BATCH = 32


class DegenerateRegionError(ValueError):
    pass


class InsufficientSamplesError(ValueError):
    pass


# -- segmentation -------------------------------------------------------------
def _ring(region, inner, width):
    if inner is not None:
        return region & ~inner
    # outer band of the region: pixels within ``width`` of its complement
    core = region.copy()
    for _ in range(width):
        shrunk = core.copy()
        shrunk[1:, :] &= core[:-1, :]
        shrunk[:-1, :] &= core[1:, :]
        shrunk[:, 1:] &= core[:, :-1]
        shrunk[:, :-1] &= core[:, 1:]
        shrunk[0, :] = shrunk[-1, :] = False
        shrunk[:, 0] = shrunk[:, -1] = False
        core = shrunk
    return region & ~core


def threshold_segment(img, region, inner=None, threshold=SEG_THRESHOLD):
    """Foreground mask inside ``region``: colour distance to the ring median > threshold.

    The ring is ``region`` minus ``inner`` when the undilated box is known,
    otherwise the region's outer ``RING``-pixel band.
    """
    img = np.asarray(img, dtype=np.float64)
    region = np.asarray(region, dtype=bool)
    if region.shape != img.shape[:2]:
        raise nx.DimensionError(f"region {region.shape} does not match image {img.shape}")
    ring = _ring(region, None if inner is None else np.asarray(inner, dtype=bool), RING)
    if ring.sum() < 4:
        raise DegenerateRegionError(f"background ring has {int(ring.sum())} pixels (< 4)")
    bg = np.median(img[ring], axis=0)
    score = np.sqrt(((img - bg) ** 2).sum(axis=-1))
    return (score > threshold) & region


def box_masks(box: LineBox):
    inner = np.zeros_like(box.region())
    inner[box.y : box.y + CELL, box.x : box.x + box.width] = True
    return box.region(), inner


def segment_text(scene, box: LineBox):
    region, inner = box_masks(box)
    return threshold_segment(scene, region, inner)


# -- recognition --------------------------------------------------------------
_TEMPLATES = None


def _templates():
    global _TEMPLATES
    if _TEMPLATES is None:
        _TEMPLATES = templates().astype(bool)
    return _TEMPLATES


def decode_cell(cell):
    """Glyph id of one binary 8x8 cell; a blank cell counts as an all-way tie (glyph 0)."""
    cell = np.asarray(cell, dtype=bool)
    if not cell.any():
        return 0
    tpl = _templates()
    d = _kernels.hamming_to_templates(cell, tpl)
    best = np.flatnonzero(d == d.min())
    return int(min(b % len(ALPHABET) for b in best))


def ocr_decode(img, box: LineBox, mask=None):
    """Decode the text line in ``box``; ``mask`` overrides the threshold segmentation."""
    seg = segment_text(img, box) if mask is None else np.asarray(mask, dtype=bool)
    out = []
    for i in range(box.n_cells):
        x, y = box.cell_origin(i)
        out.append(ALPHABET[decode_cell(seg[y : y + CELL, x : x + CELL])])
    return "".join(out)


def sen_acc_ned(pred: str, truth: str):
    if not pred and not truth:
        return 1, 1.0
    lev = _kernels.levenshtein(pred, truth)
    return int(pred == truth), 1.0 - lev / max(len(pred), len(truth))


# -- style distances ----------------------------------------------------------
def pooled_features(imgs, masks, pyramid=None):
    """Last-layer pyramid features of masked images, averaged over masked tokens: (B, c)."""
    from stgn.style_loss import default_pyramid

    pyramid = pyramid or default_pyramid()
    imgs = np.asarray(imgs, dtype=np.float64)
    masks = np.asarray(masks, dtype=np.float64)
    if imgs.ndim == 3:
        imgs, masks = imgs[None], masks[None]
    if np.any(masks.reshape(len(masks), -1).sum(axis=1) == 0):
        raise DegenerateRegionError("masked_style_distance needs non-empty masks")
    with nx.no_grad():
        f = pyramid.features(imgs * masks[..., None])[-1].data  # (B, c, N)
    side = int(round(np.sqrt(f.shape[-1])))
    factor = masks.shape[-1] // side
    w = nx.area_downsample(masks, factor).data.reshape(len(masks), -1)
    return (f * w[:, None, :]).sum(axis=-1) / w.sum(axis=-1, keepdims=True)


def _psd_sqrt(c):
    vals, vecs = np.linalg.eigh((c + c.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def frechet(feats_a, feats_b, eps=FRECHET_EPS):
    """Gaussian Fréchet distance between two feature sets (rows = samples)."""
    a, b = np.asarray(feats_a, dtype=np.float64), np.asarray(feats_b, dtype=np.float64)
    if len(a) < MIN_FRECHET_BATCH or len(b) < MIN_FRECHET_BATCH:
        raise InsufficientSamplesError(f"frechet needs >= {MIN_FRECHET_BATCH} samples per set, got {len(a)}, {len(b)}")
    mu_a, mu_b = a.mean(0), b.mean(0)
    eye = np.eye(a.shape[1]) * eps
    ca = np.cov(a, rowvar=False, bias=False) + eye
    cb = np.cov(b, rowvar=False, bias=False) + eye
    sa = _psd_sqrt(ca)
    cross = np.sqrt(np.clip(np.linalg.eigvalsh(sa @ cb @ sa), 0, None)).sum()
    d = float(((mu_a - mu_b) ** 2).sum() + np.trace(ca) + np.trace(cb) - 2 * cross)
    return max(d, 0.0)


def masked_style_distance(gen, m_gen, ref, m_ref):
    """(batch Fréchet distance, mean per-pair feature distance) over masked text regions."""
    fg = pooled_features(gen, m_gen)
    fr = pooled_features(ref, m_ref)
    feat = float(np.linalg.norm(fg - fr, axis=1).mean())
    return frechet(fg, fr), feat


# -- benchmark ----------------------------------------------------------------
REPORT_COLUMNS = ("setting", "n", "sen_acc", "ned", "masked_frechet_proxy", "masked_feat_dist_proxy")
POOLED_ROWS = ("self-all", "external-all", "all")


def setting_name(mode, lang):
    return f"{mode}-{lang}"


@dataclass
class SettingResult:
    n: int
    sen_acc: float
    ned: float
    masked_frechet: float
    masked_feat_dist: float


@dataclass
class BenchReport:
    config_hash: str
    checkpoint_id: str
    seed: int
    rows: dict = field(default_factory=dict)  # setting name -> SettingResult
    predictions: list = field(default_factory=list)  # (id, truth, pred)

    def to_text(self):
        buf = io.StringIO()
        buf.write("# stgn benchmark report\n")
        buf.write(f"# config_hash={self.config_hash}\n")
        buf.write(f"# checkpoint={self.checkpoint_id}\n")
        buf.write(f"# seed={self.seed}\n")
        buf.write("# distances are masked proxies over the fixed conv pyramid, not FID/LPIPS\n")
        buf.write("\t".join(REPORT_COLUMNS) + "\n")
        for name, r in self.rows.items():
            fr = "nan" if np.isnan(r.masked_frechet) else f"{r.masked_frechet:.6f}"
            buf.write(f"{name}\t{r.n}\t{r.sen_acc:.6f}\t{r.ned:.6f}\t{fr}\t{r.masked_feat_dist:.6f}\n")
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())


def parse_report(text):
    header, rows = {}, {}
    cols = None
    for line in text.splitlines():
        if line.startswith("# ") and "=" in line:
            k, v = line[2:].split("=", 1)
            header[k] = v
        elif line.startswith("#") or not line.strip():
            continue
        elif cols is None:
            cols = line.split("\t")
        else:
            vals = dict(zip(cols, line.split("\t")))
            rows[vals["setting"]] = SettingResult(
                int(vals["n"]),
                float(vals["sen_acc"]),
                float(vals["ned"]),
                float(vals["masked_frechet_proxy"]),
                float(vals["masked_feat_dist_proxy"]),
            )
    return header, rows


def gen_mask(scene, box):
    """Segmentation of generated text; falls back to the undilated box if it finds nothing."""
    m = segment_text(scene, box)
    if not m.any():
        _, inner = box_masks(box)
        m = inner
    return m


def score_records(records, scenes):
    """Per-record (acc, ned, gen features, ref features) for generated scene images."""
    accs, neds, fg, fr, preds = [], [], [], [], []
    for rec, scene in zip(records, scenes):
        pred = ocr_decode(scene, rec.target.box)
        acc, ned = sen_acc_ned(pred, rec.text)
        accs.append(acc)
        neds.append(ned)
        preds.append((rec.id, rec.text, pred))
        fg.append(pooled_features(scene, gen_mask(scene, rec.target.box))[0])
        ref = rec.ref
        fr.append(pooled_features(ref.scene, gen_mask(ref.scene, ref.box))[0])
    return np.array(accs), np.array(neds), np.array(fg), np.array(fr), preds


def _aggregate(accs, neds, fg, fr):
    n = len(accs)
    fd = float(np.linalg.norm(fg - fr, axis=1).mean())
    fre = frechet(fg, fr) if n >= MIN_FRECHET_BATCH else float("nan")
    return SettingResult(n, float(accs.mean()), float(neds.mean()), fre, fd)


def run_benchmark(generate_fn, records, config_hash="", checkpoint_id="", seed=0, chunk=32):
    """Score ``generate_fn(records_chunk, chunk_index) -> scenes (B, H, W, 3)`` on every setting.

    Rows: each present (mode, lang) setting, then pooled self-all / external-all / all.
    """
    report = BenchReport(config_hash, checkpoint_id, seed)
    by_setting = {}
    for start in range(0, len(records), chunk):
        part = records[start : start + chunk]
        scenes = np.asarray(generate_fn(part, start // chunk))
        if scenes.shape[0] != len(part):
            raise nx.DimensionError(f"generator returned {scenes.shape[0]} images for {len(part)} records")
        accs, neds, fg, fr, preds = score_records(part, scenes)
        report.predictions.extend(preds)
        for j, rec in enumerate(part):
            by_setting.setdefault(setting_name(rec.mode, rec.lang), []).append((accs[j], neds[j], fg[j], fr[j]))

    def agg(items):
        a, n, g, r = (np.array(x) for x in zip(*items))
        return _aggregate(a, n, g, r)

    for mode, lang in SETTINGS:
        name = setting_name(mode, lang)
        if name in by_setting:
            report.rows[name] = agg(by_setting[name])
    for mode in ("self", "external"):
        items = [x for k, v in by_setting.items() if k.startswith(mode + "-") for x in v]
        if items:
            report.rows[f"{mode}-all"] = agg(items)
    report.rows["all"] = agg([x for v in by_setting.values() for x in v])
    return report

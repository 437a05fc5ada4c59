"""Sample records, the four evaluation settings, and on-disk splits."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from stgn.numerics import Rng
from stgn.synthdata.glyphs import ALPHABET, CELL, SCRIPT_A, SCRIPT_B
from stgn.synthdata.pnm import read_pnm, write_pgm, write_ppm
from stgn.synthdata.render import (
    SIZE,
    BackgroundSpec,
    LineBox,
    StyleSpec,
    glyph_map,
    render_glyph_line,
    sample_background,
    sample_style,
)

MODES = ("self", "external")
LANGS = ("mono", "cross")
SETTINGS = tuple((m, l) for m in MODES for l in LANGS)

MANIFEST = "manifest.tsv"
MANIFEST_FIELDS = (
    "id", "mode", "lang", "script", "text", "box",
    "scene", "glyph", "text_mask", "inpaint",
    "ref_script", "ref_text", "ref_box",
    "ref_scene", "ref_glyph", "ref_text_mask", "ref_inpaint",
    "fg", "stroke", "fg_grad", "noise", "bg", "ref_bg", "seed",
)  # fmt: skip


@dataclass
class Rendering:
    """One rendered 32x32 scene with its text and derived conditioning images."""

    scene: np.ndarray
    text_mask: np.ndarray
    text: str
    script: str
    box: LineBox
    background: BackgroundSpec

    @property
    def glyph_map(self):
        return glyph_map(self.text, self.box)

    @property
    def concat(self):
        return concat_glyph_scene(self.glyph_map, self.scene)

    @property
    def inpaint_mask(self):
        """(2H, W) generation mask: zero on the glyph half, dilated line box below."""
        m = np.zeros((2 * SIZE, SIZE))
        m[SIZE:] = self.box.region()
        return m


@dataclass
class SampleRecord:
    id: str
    mode: str
    lang: str
    style: StyleSpec
    target: Rendering
    ref: Rendering
    seed: int = 0

    # flat accessors for the target's fields
    @property
    def scene(self):
        return self.target.scene

    @property
    def text(self):
        return self.target.text

    @property
    def script(self):
        return self.target.script

    @property
    def text_mask(self):
        return self.target.text_mask

    @property
    def glyph_map(self):
        return self.target.glyph_map

    @property
    def concat(self):
        return self.target.concat

    @property
    def inpaint_mask(self):
        return self.target.inpaint_mask

    @property
    def style_ref(self):
        return self.ref.scene

    @property
    def setting(self):
        return (self.mode, self.lang)


def concat_glyph_scene(glyph, scene):
    """Stack the glyph map (replicated to RGB) above the scene."""
    glyph = np.asarray(glyph, dtype=np.float64)
    scene = np.asarray(scene, dtype=np.float64)
    if glyph.shape[1] != scene.shape[1]:
        raise ValueError(f"glyph width {glyph.shape[1]} != scene width {scene.shape[1]}")
    g3 = np.repeat(glyph[..., None], 3, axis=2) if glyph.ndim == 2 else glyph
    return np.concatenate([g3, scene], axis=0)


def _random_text(rng, script, n):
    base = 0 if script == SCRIPT_A else 10
    return "".join(ALPHABET[base + int(i)] for i in rng.integers(0, 10, size=n))


def _random_box(rng, n):
    return LineBox(int(rng.integers(0, SIZE - n * CELL + 1)), int(rng.integers(0, SIZE - CELL + 1)), n)


def _other(script):
    return SCRIPT_B if script == SCRIPT_A else SCRIPT_A


def compose_sample(rng: Rng, mode: str, lang: str, sample_id: str = "", seed: int = 0) -> SampleRecord:
    """Draw one record for the (mode, lang) setting."""
    if mode not in MODES or lang not in LANGS:
        raise ValueError(f"unknown setting ({mode}, {lang})")
    style = sample_style(rng)
    script = SCRIPT_A if rng.uniform() < 0.5 else SCRIPT_B
    n = int(rng.integers(2, 5))
    text = _random_text(rng, script, n)
    box = _random_box(rng, n)
    background = sample_background(rng, style)
    scene, mask = render_glyph_line(text, style, background, box, rng)
    target = Rendering(scene, mask, text, script, box, background)
    ref_script = script if lang == "mono" else _other(script)

    if mode == "self" and lang == "mono":
        ref = target
    elif mode == "self":
        # In-place cross-lingual edit: same scene and line box, other script.
        ref_text = _random_text(rng, ref_script, n)
        ref_scene, ref_mask = render_glyph_line(ref_text, style, background, box, rng)
        ref = Rendering(ref_scene, ref_mask, ref_text, ref_script, box, background)
    else:
        rn = int(rng.integers(2, 5))
        ref_text = _random_text(rng, ref_script, rn)
        while ref_text == text:
            ref_text = _random_text(rng, ref_script, rn)
        ref_box = _random_box(rng, rn)
        ref_bg = sample_background(rng, style)
        ref_scene, ref_mask = render_glyph_line(ref_text, style, ref_bg, ref_box, rng)
        ref = Rendering(ref_scene, ref_mask, ref_text, ref_script, ref_box, ref_bg)
    return SampleRecord(sample_id, mode, lang, style, target, ref, seed)


def sample_rng(seed: int, kind: str, index: int) -> Rng:
    return Rng(seed).child(kind).child(index)


def split_settings(kind, n, settings=None):
    """Setting per sample index: bench splits are n/4 blocks per setting."""
    settings = tuple(settings or SETTINGS)
    if kind == "bench":
        if n % len(settings):
            raise ValueError(f"bench size {n} must be a multiple of {len(settings)}")
        per = n // len(settings)
        return [settings[i // per] for i in range(n)]
    return [settings[i % len(settings)] for i in range(n)]


def generate(kind, n, seed, settings=None):
    """Generate records in memory (no files)."""
    if n <= 0:
        raise ValueError("split size must be positive")
    out = []
    for i, (mode, lang) in enumerate(split_settings(kind, n, settings)):
        out.append(compose_sample(sample_rng(seed, kind, i), mode, lang, f"{kind}{i:05d}", seed))
    return out


# -- manifest encoding --------------------------------------------------------
def _enc_color(c):
    return ",".join(str(int(round(v * 255))) for v in c)


def _dec_color(s):
    return tuple(int(v) / 255.0 for v in s.split(","))


def _enc_box(b):
    return f"{b.x},{b.y},{b.n_cells}"


def _dec_box(s):
    x, y, n = (int(v) for v in s.split(","))
    return LineBox(x, y, n)


def _enc_bg(bg):
    if bg.kind == "solid":
        return f"solid/{_enc_color(bg.color)}"
    if bg.kind == "gradient":
        return f"gradient/{_enc_color(bg.color)}/{_enc_color(bg.color2)}/{bg.axis}"
    return f"checker/{_enc_color(bg.color)}/{bg.period}/{bg.amp!r}/{bg.phase[0]},{bg.phase[1]}"


def _dec_bg(s):
    parts = s.split("/")
    if parts[0] == "solid":
        return BackgroundSpec("solid", _dec_color(parts[1]))
    if parts[0] == "gradient":
        return BackgroundSpec("gradient", _dec_color(parts[1]), color2=_dec_color(parts[2]), axis=parts[3])
    if parts[0] == "checker":
        ph = tuple(int(v) for v in parts[4].split(","))
        return BackgroundSpec("checker", _dec_color(parts[1]), period=int(parts[2]), amp=float(parts[3]), phase=ph)
    raise ValueError(f"bad background field {s!r}")


def manifest_line(rec: SampleRecord, paths: dict) -> str:
    st = rec.style
    grad = "none" if st.gradient is None else f"{st.gradient[0]}:{_enc_color(st.gradient[1])}"
    values = {
        "id": rec.id,
        "mode": rec.mode,
        "lang": rec.lang,
        "script": rec.target.script,
        "text": rec.target.text,
        "box": _enc_box(rec.target.box),
        "ref_script": rec.ref.script,
        "ref_text": rec.ref.text,
        "ref_box": _enc_box(rec.ref.box),
        "fg": _enc_color(st.fg_color),
        "stroke": str(st.stroke_width),
        "fg_grad": grad,
        "noise": repr(st.texture_noise),
        "bg": _enc_bg(rec.target.background),
        "ref_bg": _enc_bg(rec.ref.background),
        "seed": str(rec.seed),
        **paths,
    }
    return "\t".join(f"{k}={values[k]}" for k in MANIFEST_FIELDS)


def parse_manifest_line(line: str) -> dict:
    fields = dict(item.split("=", 1) for item in line.rstrip("\n").split("\t"))
    missing = [k for k in MANIFEST_FIELDS if k not in fields]
    if missing:
        raise ValueError(f"manifest line missing fields {missing}")
    return fields


def _style_from_fields(f):
    grad = None
    if f["fg_grad"] != "none":
        axis, col = f["fg_grad"].split(":")
        grad = (axis, _dec_color(col))
    return StyleSpec(_dec_color(f["fg"]), int(f["stroke"]), grad, float(f["noise"]))


def _write_record(rec, directory):
    paths = {}
    for prefix, r in (("", rec.target), ("ref_", rec.ref)):
        stem = f"{rec.id}_{prefix}"
        names = {
            f"{prefix}scene": (stem + "scene.ppm", write_ppm, r.scene),
            f"{prefix}glyph": (stem + "glyph.pgm", write_pgm, r.glyph_map),
            f"{prefix}text_mask": (stem + "textmask.pgm", write_pgm, r.text_mask.astype(np.float64)),
            f"{prefix}inpaint": (stem + "inpaint.pgm", write_pgm, r.inpaint_mask),
        }
        for key, (name, writer, img) in names.items():
            writer(os.path.join(directory, name), img)
            paths[key] = name
    return paths


def make_split(kind, n, out_dir, seed, settings=None):
    """Write ``n`` records and ``manifest.tsv`` under ``out_dir/kind``.

    Returns the manifest path.
    """
    directory = os.path.join(out_dir, kind)
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create split directory {directory}: {exc}") from exc
    lines = []
    for rec in generate(kind, n, seed, settings):
        lines.append(manifest_line(rec, _write_record(rec, directory)))
    path = os.path.join(directory, MANIFEST)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def load_split(manifest_path):
    """Read a manifest and its images back into :class:`SampleRecord` objects."""
    directory = os.path.dirname(os.path.abspath(manifest_path))
    records = []
    with open(manifest_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            f = parse_manifest_line(line)
            style = _style_from_fields(f)

            def rendering(prefix, script, text, box, bg):
                scene = read_pnm(os.path.join(directory, f[prefix + "scene"]))
                mask = read_pnm(os.path.join(directory, f[prefix + "text_mask"])) > 0.5
                return Rendering(scene, mask, text, script, box, bg)

            target = rendering("", f["script"], f["text"], _dec_box(f["box"]), _dec_bg(f["bg"]))
            if f["mode"] == "self" and f["lang"] == "mono":
                ref = target
            else:
                ref = rendering("ref_", f["ref_script"], f["ref_text"], _dec_box(f["ref_box"]), _dec_bg(f["ref_bg"]))
            records.append(SampleRecord(f["id"], f["mode"], f["lang"], style, target, ref, int(f["seed"])))
    return records

"""Styled rasterization of glyph lines over procedural backgrounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stgn.synthdata.glyphs import ALPHABET, CELL, GLYPHS, stroke_mask
from stgn.synthdata.pnm import quantize

SIZE = 32
MAX_GLYPHS = SIZE // CELL
LUMA = np.array([0.299, 0.587, 0.114])
# Minimum luminance gap the sampler enforces between any fg colour and the
# background base colour; comfortably above the 0.2 legibility floor.
MIN_CONTRAST = 0.35


def luminance(rgb):
    return float(np.dot(LUMA, rgb))


@dataclass(frozen=True)
class StyleSpec:
    """Appearance of the text itself; shared exactly by external-style pairs."""

    fg_color: tuple
    stroke_width: int
    gradient: tuple | None  # (axis "x"|"y", second colour) or None
    texture_noise: float

    def fg_colors(self):
        return [self.fg_color] + ([self.gradient[1]] if self.gradient else [])


@dataclass(frozen=True)
class BackgroundSpec:
    kind: str  # "solid" | "gradient" | "checker"
    color: tuple
    color2: tuple | None = None  # gradient end colour
    axis: str | None = None  # gradient axis
    period: int | None = None  # checker cell size
    amp: float | None = None  # checker +/- amplitude
    phase: tuple | None = None  # checker (dy, dx) offset


@dataclass(frozen=True)
class LineBox:
    """Cell-aligned text line: origin (x, y) and n_cells 8x8 glyph cells."""

    x: int
    y: int
    n_cells: int

    @property
    def width(self):
        return self.n_cells * CELL

    def cell_origin(self, i):
        return self.x + i * CELL, self.y

    def region(self, margin=2, size=SIZE):
        """Boolean mask of the box dilated by ``margin`` pixels, clipped to the canvas."""
        out = np.zeros((size, size), dtype=bool)
        y0, y1 = max(self.y - margin, 0), min(self.y + CELL + margin, size)
        x0, x1 = max(self.x - margin, 0), min(self.x + self.width + margin, size)
        out[y0:y1, x0:x1] = True
        return out


def _color(rng):
    return tuple(int(v) / 255.0 for v in rng.integers(0, 256, size=3))


def sample_style(rng) -> StyleSpec:
    fg = _color(rng)
    gradient = None
    if rng.uniform() < 0.4:
        while True:
            c2 = _color(rng)
            if abs(luminance(c2) - luminance(fg)) <= 0.15 and np.abs(np.subtract(c2, fg)).max() >= 0.2:
                break
        gradient = ("x" if rng.uniform() < 0.5 else "y", c2)
    noise = 0.0 if rng.uniform() < 0.4 else round(float(rng.uniform(0.02, 0.15)), 2)
    return StyleSpec(fg, int(rng.integers(1, 3)), gradient, noise)


def sample_background(rng, style: StyleSpec) -> BackgroundSpec:
    lum_fg = [luminance(c) for c in style.fg_colors()]
    while True:
        base = _color(rng)
        if min(abs(luminance(base) - lf) for lf in lum_fg) >= MIN_CONTRAST + 0.05:
            break
    kind = ("solid", "gradient", "checker")[int(rng.integers(0, 3))]
    if kind == "solid":
        return BackgroundSpec(kind, base)
    if kind == "gradient":
        delta = rng.integers(-10, 11, size=3) / 255.0
        c2 = tuple(float(np.clip(b + d, 0.0, 1.0)) for b, d in zip(base, delta))
        return BackgroundSpec(kind, base, color2=c2, axis="x" if rng.uniform() < 0.5 else "y")
    period = int(rng.choice([2, 4]))
    phase = (int(rng.integers(0, period)), int(rng.integers(0, period)))
    return BackgroundSpec(kind, base, period=period, amp=round(float(rng.uniform(0.01, 0.03)), 3), phase=phase)


def render_background(bg: BackgroundSpec, size=SIZE):
    base = np.broadcast_to(np.asarray(bg.color, dtype=np.float64), (size, size, 3)).copy()
    if bg.kind == "solid":
        return base
    if bg.kind == "gradient":
        ramp = np.linspace(0.0, 1.0, size)
        w = ramp[None, :, None] if bg.axis == "x" else ramp[:, None, None]
        return (1 - w) * base + w * np.asarray(bg.color2)
    if bg.kind == "checker":
        ys, xs = np.mgrid[0:size, 0:size]
        parity = (((ys + bg.phase[0]) // bg.period + (xs + bg.phase[1]) // bg.period) % 2) * 2 - 1
        return np.clip(base + bg.amp * parity[..., None], 0.0, 1.0)
    raise ValueError(f"unknown background kind {bg.kind!r}")


def text_coverage(text: str, box: LineBox, width: int, size=SIZE):
    """Boolean foreground coverage of ``text`` laid out in ``box``."""
    if len(text) != box.n_cells:
        raise ValueError(f"text {text!r} has {len(text)} glyphs but box holds {box.n_cells}")
    if box.x < 0 or box.y < 0 or box.x + box.width > size or box.y + CELL > size:
        raise ValueError(f"text box {box} does not fit a {size}x{size} canvas")
    out = np.zeros((size, size), dtype=bool)
    for i, ch in enumerate(text):
        x, y = box.cell_origin(i)
        out[y : y + CELL, x : x + CELL] |= stroke_mask(GLYPHS[ALPHABET.index(ch)].strokes, width)
    return out


def glyph_map(text: str, box: LineBox, size=SIZE):
    """Canonical plain rendering: width-1 black strokes on white."""
    return np.where(text_coverage(text, box, 1, size), 0.0, 1.0)


def render_glyph_line(text, style: StyleSpec, background: BackgroundSpec, box: LineBox, rng, size=SIZE):
    """Rasterize ``text`` in ``style`` over ``background``.

    Returns (image HxWx3 on the 8-bit grid, exact foreground mask).
    """
    if len(text) > size // CELL:
        raise ValueError(f"text {text!r} is too long for a {size}-pixel canvas")
    mask = text_coverage(text, box, style.stroke_width, size)
    img = render_background(background, size)
    fg = np.broadcast_to(np.asarray(style.fg_color, dtype=np.float64), (size, size, 3)).copy()
    if style.gradient is not None:
        axis, c2 = style.gradient
        if axis == "x":
            coord = (np.arange(size) - box.x) / max(box.width - 1, 1)
            w = np.clip(coord, 0, 1)[None, :, None]
        else:
            coord = (np.arange(size) - box.y) / (CELL - 1)
            w = np.clip(coord, 0, 1)[:, None, None]
        fg = (1 - w) * fg + w * np.asarray(c2)
    if style.texture_noise > 0:
        fg = fg + rng.uniform(-style.texture_noise, style.texture_noise, size=(size, size, 1))
    img = np.where(mask[..., None], np.clip(fg, 0.0, 1.0), img)
    return quantize(img), mask

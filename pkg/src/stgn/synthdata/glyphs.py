"""Two procedural scripts drawn on an 8x8 design grid.

Strokes are straight segments that are horizontal, vertical or at 45 degrees,
with endpoints in 0..6 so a width-2 pen still fits inside the 8x8 cell.
Script A ("latinlike") glyphs have 2-4 strokes, script B ("hanlike") 5-8.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CELL = 8

SCRIPT_A = "A"
SCRIPT_B = "B"
SCRIPTS = (SCRIPT_A, SCRIPT_B)

# One label character per glyph; the global glyph id is the position here.
ALPHABET = "LTYXHZNEUK" + "甲乙丙丁戊己庚辛壬癸"

_A = [
    [(1, 0, 1, 6), (1, 6, 5, 6)],
    [(0, 0, 6, 0), (3, 0, 3, 6)],
    [(0, 0, 3, 3), (6, 0, 3, 3), (3, 3, 3, 6)],
    [(0, 0, 6, 6), (6, 0, 0, 6)],
    [(1, 0, 1, 6), (5, 0, 5, 6), (1, 3, 5, 3)],
    [(0, 0, 6, 0), (6, 0, 0, 6), (0, 6, 6, 6)],
    [(0, 0, 0, 6), (6, 0, 6, 6), (0, 0, 6, 6)],
    [(1, 0, 1, 6), (1, 0, 5, 0), (1, 3, 4, 3), (1, 6, 5, 6)],
    [(1, 0, 1, 6), (5, 0, 5, 6), (1, 6, 5, 6)],
    [(1, 0, 1, 6), (1, 3, 4, 0), (1, 3, 4, 6)],
]

# Script B lives on the 3x3 lattice {0, 3, 6}^2 so width-2 strokes never merge.
# The set was picked by random search for pairwise Hamming separation >= 9
# against every other glyph at both pen widths.
_B = [
    [(0, 0, 6, 0), (3, 3, 6, 3), (0, 6, 3, 6), (0, 0, 0, 6), (3, 0, 6, 3), (6, 0, 3, 3), (3, 3, 6, 6)],
    [(0, 0, 3, 0), (3, 3, 6, 3), (0, 3, 0, 6), (6, 0, 6, 6), (0, 0, 3, 3), (0, 3, 3, 6), (3, 0, 6, 3)],
    [(3, 0, 6, 0), (3, 6, 6, 6), (3, 0, 3, 3), (6, 0, 3, 3), (3, 3, 6, 6), (6, 3, 3, 6)],
    [(3, 3, 6, 3), (0, 0, 0, 3), (3, 0, 3, 6), (0, 0, 6, 6), (3, 0, 6, 3), (6, 0, 3, 3)],
    [(0, 3, 3, 3), (3, 6, 6, 6), (0, 3, 0, 6), (3, 3, 3, 6), (0, 0, 6, 6), (3, 3, 0, 6), (3, 0, 6, 3)],
    [(0, 6, 6, 6), (3, 0, 3, 6), (6, 0, 6, 6), (0, 0, 3, 3), (3, 3, 0, 6)],
    [(3, 0, 6, 0), (0, 6, 3, 6), (0, 0, 0, 3), (0, 0, 3, 3), (3, 0, 0, 3), (0, 3, 3, 6), (6, 0, 0, 6)],
    [(3, 0, 6, 0), (3, 3, 6, 3), (3, 6, 6, 6), (0, 0, 0, 3), (3, 0, 3, 6), (0, 3, 3, 6), (6, 0, 3, 3), (6, 3, 3, 6)],
    [(0, 6, 3, 6), (0, 0, 0, 3), (3, 0, 3, 3), (0, 0, 6, 6), (0, 3, 3, 6), (3, 3, 0, 6)],
    [(0, 0, 3, 0), (0, 3, 3, 3), (3, 0, 3, 3), (0, 3, 3, 6), (3, 0, 6, 3), (6, 0, 3, 3)],
]


@dataclass(frozen=True)
class ScriptGlyph:
    script: str
    index: int
    strokes: tuple

    @property
    def glyph_id(self) -> int:
        return self.index + (0 if self.script == SCRIPT_A else 10)

    @property
    def char(self) -> str:
        return ALPHABET[self.glyph_id]


GLYPHS = tuple(ScriptGlyph(SCRIPT_A, i, tuple(s)) for i, s in enumerate(_A)) + tuple(
    ScriptGlyph(SCRIPT_B, i, tuple(s)) for i, s in enumerate(_B)
)


def glyph(script: str, index: int) -> ScriptGlyph:
    if script not in SCRIPTS or not 0 <= index < 10:
        raise ValueError(f"no glyph {script}{index}")
    return GLYPHS[index + (0 if script == SCRIPT_A else 10)]


def script_of(char: str) -> str:
    return SCRIPT_A if ALPHABET.index(char) < 10 else SCRIPT_B


def segment_pixels(x0, y0, x1, y1):
    """Integer pixels of an axis-aligned or 45-degree segment, endpoints included."""
    dx, dy = x1 - x0, y1 - y0
    if dx and dy and abs(dx) != abs(dy):
        raise ValueError(f"segment ({x0},{y0})-({x1},{y1}) is not axis-aligned or diagonal")
    n = max(abs(dx), abs(dy))
    sx, sy = (dx > 0) - (dx < 0), (dy > 0) - (dy < 0)
    return [(x0 + k * sx, y0 + k * sy) for k in range(n + 1)]


def stroke_mask(strokes, width: int = 1, size: int = CELL) -> np.ndarray:
    """Boolean (size, size) coverage of the strokes with a width x width pen."""
    if width not in (1, 2):
        raise ValueError(f"stroke width must be 1 or 2, got {width}")
    out = np.zeros((size, size), dtype=bool)
    for seg in strokes:
        for x, y in segment_pixels(*seg):
            out[y : y + width, x : x + width] = True
    return out


def templates() -> np.ndarray:
    """(40, 8, 8) canonical rasters: glyph ids 0..19 at width 1, then at width 2."""
    return np.stack([stroke_mask(g.strokes, w) for w in (1, 2) for g in GLYPHS])

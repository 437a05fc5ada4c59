from stgn.synthdata.dataset import (
    LANGS,
    MANIFEST,
    MANIFEST_FIELDS,
    MODES,
    SETTINGS,
    Rendering,
    SampleRecord,
    compose_sample,
    concat_glyph_scene,
    generate,
    load_split,
    make_split,
    parse_manifest_line,
    sample_rng,
)
from stgn.synthdata.glyphs import ALPHABET, CELL, GLYPHS, SCRIPT_A, SCRIPT_B, ScriptGlyph, glyph, templates
from stgn.synthdata.pnm import quantize, read_pnm, write_pgm, write_ppm
from stgn.synthdata.render import (
    SIZE,
    BackgroundSpec,
    LineBox,
    StyleSpec,
    render_background,
    render_glyph_line,
    text_coverage,
)

__all__ = [
    "ALPHABET", "CELL", "GLYPHS", "LANGS", "MANIFEST", "MANIFEST_FIELDS", "MODES", "SCRIPT_A", "SCRIPT_B",
    "SETTINGS", "SIZE", "BackgroundSpec", "LineBox", "Rendering", "SampleRecord", "ScriptGlyph", "StyleSpec",
    "compose_sample", "concat_glyph_scene", "generate", "glyph", "load_split", "make_split",
    "parse_manifest_line", "quantize", "read_pnm", "render_background", "render_glyph_line", "sample_rng",
    "templates", "text_coverage", "write_pgm", "write_ppm",
]

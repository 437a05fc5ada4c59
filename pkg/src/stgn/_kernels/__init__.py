"""Hot kernels: compiled extension when built, numpy fallback otherwise.

Set ``STGN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from stgn._kernels import _reference

BACKEND = "python"

if os.environ.get("STGN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from stgn._kernels import _fast as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _reference
else:
    _impl = _reference

gelu_fwd = _impl.gelu_fwd
layer_norm_fwd = _impl.layer_norm_fwd
layer_norm_bwd = _impl.layer_norm_bwd
attention_probs = _impl.attention_probs
softmax_bwd = _impl.softmax_bwd
col2im = _impl.col2im
levenshtein = _impl.levenshtein
hamming_to_templates = _impl.hamming_to_templates

__all__ = [
    "BACKEND",
    "gelu_fwd",
    "layer_norm_fwd",
    "layer_norm_bwd",
    "attention_probs",
    "softmax_bwd",
    "col2im",
    "levenshtein",
    "hamming_to_templates",
]

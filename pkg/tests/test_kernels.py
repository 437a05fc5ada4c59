import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stgn import _kernels
from stgn._kernels import _reference as ref

fast = pytest.importorskip("stgn._kernels._fast")


def _r(seed, shape, lo=-3, hi=3):
    return np.random.default_rng(seed).uniform(lo, hi, shape)


@pytest.mark.parametrize("shape", [(5,), (3, 7), (2, 3, 4, 9)])
def test_gelu_agrees(shape):
    x = _r(0, shape, -8, 8)
    for a, b in zip(fast.gelu_fwd(x), ref.gelu_fwd(x)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_layer_norm_agrees():
    x = _r(1, (4, 6, 16))
    xh_f, inv_f = fast.layer_norm_fwd(x, 1e-5)
    xh_r, inv_r = ref.layer_norm_fwd(x, 1e-5)
    np.testing.assert_allclose(xh_f, xh_r, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(inv_f, inv_r, rtol=1e-12)
    g = _r(2, x.shape)
    np.testing.assert_allclose(fast.layer_norm_bwd(g, xh_r, inv_r), ref.layer_norm_bwd(g, xh_r, inv_r), rtol=1e-11, atol=1e-12)


def test_softmax_agrees_and_survives_large_logits():
    s = _r(3, (2, 3, 5, 7), -50, 50)
    s[0, 0, 0] = 1e4
    p_f, p_r = fast.attention_probs(s), ref.attention_probs(s)
    np.testing.assert_allclose(p_f, p_r, rtol=1e-12, atol=1e-15)
    assert np.all(np.isfinite(p_f))
    g = _r(4, s.shape)
    np.testing.assert_allclose(fast.softmax_bwd(g, p_r), ref.softmax_bwd(g, p_r), rtol=1e-11, atol=1e-13)


@pytest.mark.parametrize("k,stride", [(3, 1), (3, 2), (4, 4), (2, 1)])
def test_col2im_agrees(k, stride):
    B, H, W, C = 2, 9, 8, 3
    Ho, Wo = (H - k) // stride + 1, (W - k) // stride + 1
    cols = _r(5, (B, Ho, Wo, k, k, C))
    np.testing.assert_allclose(fast.col2im(cols, (B, H, W, C), k, k, stride), ref.col2im(cols, (B, H, W, C), k, k, stride), atol=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.text(alphabet="abcXYZ", max_size=9), st.text(alphabet="abcXYZ", max_size=9))
def test_levenshtein_agrees(a, b):
    assert fast.levenshtein(a, b) == ref.levenshtein(a, b)


def test_hamming_agrees():
    rng = np.random.default_rng(6)
    templates = rng.uniform(size=(40, 12, 10)) > 0.5
    cell = rng.uniform(size=(12, 10)) > 0.5
    np.testing.assert_array_equal(
        np.asarray(fast.hamming_to_templates(cell, templates)), np.asarray(ref.hamming_to_templates(cell, templates))
    )


def test_noncontiguous_inputs():
    x = _r(7, (6, 10))[:, ::2]
    np.testing.assert_allclose(fast.gelu_fwd(x)[0], ref.gelu_fwd(x)[0], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(fast.attention_probs(x.T), ref.attention_probs(x.T), rtol=1e-12)


def test_backend_flag():
    assert _kernels.BACKEND == ("python" if os.environ.get("STGN_PURE_PYTHON") == "1" else "cython")


def test_forced_fallback_runs():
    code = "from stgn import _kernels, gradsuite; print(_kernels.BACKEND); r = gradsuite.run_suite(); print(all(x.passed for x in r[:10]))"
    env = dict(os.environ, STGN_PURE_PYTHON="1", PYTHONPATH=os.pathsep.join(sys.path))
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, timeout=600)
    assert out.returncode == 0, out.stderr
    assert out.stdout.split() == ["python", "True"]

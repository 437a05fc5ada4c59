"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from stgn._kernels import _reference

try:
    from stgn._kernels import _fast
except ImportError:  # extension not built
    _fast = None


def workloads(rng):
    # shapes match what the default model produces per training step
    x = rng.normal(size=(16, 64, 128))
    s = rng.normal(size=(16, 4, 64, 64))
    p = _reference.attention_probs(s)
    xh, inv = _reference.layer_norm_fwd(x, 1e-5)
    g = rng.normal(size=x.shape)
    gs = rng.normal(size=s.shape)
    cols = rng.normal(size=(16, 16, 16, 3, 3, 16))
    cells = rng.uniform(size=(12, 10)) > 0.5
    tmpl = rng.uniform(size=(40, 12, 10)) > 0.5
    return {
        "gelu_fwd": lambda k: k.gelu_fwd(x),
        "layer_norm_fwd": lambda k: k.layer_norm_fwd(x, 1e-5),
        "layer_norm_bwd": lambda k: k.layer_norm_bwd(g, xh, inv),
        "attention_probs": lambda k: k.attention_probs(s),
        "softmax_bwd": lambda k: k.softmax_bwd(gs, p),
        "col2im": lambda k: k.col2im(cols, (16, 33, 33, 16), 3, 3, 2),
        "levenshtein": lambda k: k.levenshtein("ABCDEFGH", "ABDCEFHG"),
        "hamming_to_templates": lambda k: k.hamming_to_templates(cells, tmpl),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args()
    if _fast is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':22s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in workloads(rng).items():
        t = {}
        for label, mod in (("python", _reference), ("cython", _fast)):
            best = min(timeit.repeat(lambda: fn(mod), repeat=args.repeat, number=args.number))
            t[label] = 1e3 * best / args.number
        print(f"{name:22s} {t['python']:10.3f} {t['cython']:10.3f} {t['python'] / t['cython']:7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

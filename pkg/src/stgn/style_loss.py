"""Fixed random conv pyramid, masked Gram style loss, and the combined objective."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from stgn import numerics as nx
from stgn.numerics import Rng, Tensor

PHI_SEED = 0
PHI_CHANNELS = (8, 16, 32)
DEFAULT_LAMBDA_TSC = 10.0


class ContractError(ValueError):
    pass


class FeaturePyramid:
    """Three frozen 3x3 stride-2 conv + ReLU layers; biases are zero.

    Weights are He-normal draws from a pinned seed and never change.
    """

    def __init__(self, seed=PHI_SEED, channels=PHI_CHANNELS, in_channels=3):
        rng = Rng(seed).child("phi")
        self.weights = []
        cin = in_channels
        for j, cout in enumerate(channels):
            w = rng.child(j).normal((3, 3, cin, cout), np.sqrt(2.0 / (9 * cin)))
            w.setflags(write=False)
            self.weights.append(w)
            cin = cout
        self.biases = [np.zeros(c) for c in channels]
        for b in self.biases:
            b.setflags(write=False)
        self.channels = tuple(channels)

    def features(self, img):
        """Per-layer features F_j laid out (B, c_j, N_j); a (H, W, 3) input gets B = 1."""
        img = img if isinstance(img, Tensor) else Tensor(img)
        if img.ndim == 3:
            img = nx.reshape(img, (1,) + img.shape)
        B, H, W, _ = img.shape
        need = 2 ** (len(self.weights))
        if H < need or W < need:
            raise nx.DimensionError(f"image {H}x{W} too small for {len(self.weights)} stride-2 layers (need >= {need})")
        feats = []
        h = img
        for w, b in zip(self.weights, self.biases):
            h = nx.relu(nx.conv2d(h, Tensor(w), Tensor(b), stride=2, padding=1))
            _, hh, ww, c = h.shape
            feats.append(nx.transpose(nx.reshape(h, (B, hh * ww, c)), (0, 2, 1)))
        return feats

    def grams(self, img):
        return [nx.gram_matrix(f) for f in self.features(img)]


@lru_cache(maxsize=None)
def default_pyramid():
    return FeaturePyramid()


def feature_pyramid(img):
    return default_pyramid().features(img)


def _masked(img, mask):
    img = img if isinstance(img, Tensor) else Tensor(img)
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != img.shape[:-1]:
        raise nx.DimensionError(f"mask {m.shape} does not match image {img.shape}")
    return img * m[..., None]


def tsc_loss(gen, m_gen, ref, m_ref, pyramid=None):
    """Sum over layers of squared Frobenius distance between masked-image Grams.

    Masks multiply the pixels before the extractor. A batched call (B, H, W, 3)
    returns the batch mean of the per-sample losses.
    """
    pyramid = pyramid or default_pyramid()
    gen_shape = gen.shape if isinstance(gen, Tensor) else np.shape(gen)
    if tuple(gen_shape) != tuple(np.shape(ref)):
        raise nx.DimensionError(f"gen {tuple(gen_shape)} and ref {np.shape(ref)} differ")
    g_gen = pyramid.grams(_masked(gen, m_gen))
    g_ref = pyramid.grams(_masked(ref, m_ref))
    total = None
    for a, b in zip(g_gen, g_ref):
        d = a - b
        term = nx.tsum(d * d, axis=(-2, -1))
        total = term if total is None else total + term
    return nx.mean(total)


@dataclass(frozen=True)
class LossReport:
    l_cfm: float
    l_tsc: float
    lambda_tsc: float
    total: float


def _value(x):
    return float(x.data) if isinstance(x, Tensor) else float(x)


def total_loss(l_cfm, l_tsc, lambda_tsc=DEFAULT_LAMBDA_TSC):
    """Returns (objective, report). The objective is a Tensor when either input is."""
    a, b = _value(l_cfm), _value(l_tsc)
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ContractError(f"loss terms must be finite, got {a}, {b}")
    if a < 0 or b < 0:
        raise ContractError(f"loss terms must be nonnegative, got {a}, {b}")
    total = a + lambda_tsc * b
    obj = total
    if isinstance(l_cfm, Tensor):
        obj = l_cfm + l_tsc * lambda_tsc if isinstance(l_tsc, Tensor) else l_cfm + lambda_tsc * b
    elif isinstance(l_tsc, Tensor):
        obj = l_tsc * lambda_tsc + a
    return obj, LossReport(a, b, float(lambda_tsc), total)

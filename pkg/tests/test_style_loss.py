import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stgn import numerics as nx
from stgn.numerics import Rng, grad_check
from stgn.style_loss import (
    DEFAULT_LAMBDA_TSC,
    ContractError,
    FeaturePyramid,
    default_pyramid,
    feature_pyramid,
    total_loss,
    tsc_loss,
)


def test_default_lambda_is_ten():
    assert DEFAULT_LAMBDA_TSC == 10.0


def test_pyramid_zero_image_gives_zero_features():
    for f in feature_pyramid(np.zeros((32, 32, 3))):
        assert not f.data.any()


def test_pyramid_spatial_halving(rng):
    feats = feature_pyramid(rng.uniform(size=(32, 32, 3)))
    assert [f.shape for f in feats] == [(1, 8, 256), (1, 16, 64), (1, 32, 16)]


def test_pyramid_frozen_and_deterministic(rng):
    img = rng.uniform(size=(16, 16, 3))
    a = [f.data for f in FeaturePyramid().features(img)]
    b = [f.data for f in default_pyramid().features(img)]
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    with pytest.raises(ValueError):
        default_pyramid().weights[0][0, 0, 0, 0] = 1.0


def test_pyramid_too_small():
    with pytest.raises(nx.DimensionError):
        feature_pyramid(np.zeros((4, 4, 3)))


def test_tsc_identical_is_zero(rng):
    img = rng.uniform(size=(16, 16, 3))
    m = (rng.uniform(size=(16, 16)) > 0.5).astype(float)
    assert float(tsc_loss(img, m, img, m).data) == 0.0


def test_tsc_fully_masked_is_zero(rng):
    z = np.zeros((16, 16))
    assert float(tsc_loss(rng.uniform(size=(16, 16, 3)), z, rng.uniform(size=(16, 16, 3)), z).data) == 0.0


def test_tsc_scale_law(rng):
    ref = rng.uniform(size=(16, 16, 3))
    ones = np.ones((16, 16))
    expected = 9 * sum(float(nx.tsum(g * g).data) for g in default_pyramid().grams(ref))
    got = float(tsc_loss(2 * ref, ones, ref, ones).data)
    assert got == pytest.approx(expected, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_tsc_nonnegative_and_symmetric(seed):
    r = Rng(seed)
    a, b = r.uniform(size=(8, 8, 3)), r.uniform(size=(8, 8, 3))
    ma, mb = r.uniform(size=(8, 8)), r.uniform(size=(8, 8))
    ab = float(tsc_loss(a, ma, b, mb).data)
    ba = float(tsc_loss(b, mb, a, ma).data)
    assert ab >= 0
    assert ab == pytest.approx(ba, rel=1e-12, abs=1e-15)


def test_tsc_batch_is_mean(rng):
    g, r_ = rng.uniform(size=(3, 8, 8, 3)), rng.uniform(size=(3, 8, 8, 3))
    m = np.ones((3, 8, 8))
    per = [float(tsc_loss(g[i], m[i], r_[i], m[i]).data) for i in range(3)]
    assert float(tsc_loss(g, m, r_, m).data) == pytest.approx(np.mean(per), rel=1e-12)


def test_tsc_gradcheck_8x8(rng):
    gen, ref = rng.uniform(size=(8, 8, 3)), rng.uniform(size=(8, 8, 3))
    mg, mr = rng.uniform(size=(8, 8)), rng.uniform(size=(8, 8))
    assert grad_check(lambda x: tsc_loss(x, mg, ref, mr), gen) < 1e-4


def test_tsc_size_mismatch():
    with pytest.raises(nx.DimensionError):
        tsc_loss(np.zeros((8, 8, 3)), np.ones((8, 8)), np.zeros((16, 16, 3)), np.ones((16, 16)))


@pytest.mark.parametrize("a, b, want", [(1.0, 0.0, 1.0), (0.0, 1.0, 10.0), (0.5, 0.2, 2.5)])
def test_total_loss_examples(a, b, want):
    obj, rep = total_loss(a, b)
    assert rep.total == pytest.approx(want, abs=1e-15)
    assert rep.lambda_tsc == 10.0


def test_total_loss_tensor_gradient():
    a = nx.Tensor(np.array(0.5), requires_grad=True)
    b = nx.Tensor(np.array(0.2), requires_grad=True)
    obj, _ = total_loss(a, b, 10.0)
    obj.backward()
    assert float(a.grad) == 1.0 and float(b.grad) == 10.0


@pytest.mark.parametrize("a, b", [(-1.0, 0.0), (0.0, -0.1), (float("nan"), 0.0), (0.0, float("inf"))])
def test_total_loss_contract(a, b):
    with pytest.raises(ContractError):
        total_loss(a, b)

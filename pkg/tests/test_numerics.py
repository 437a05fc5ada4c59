import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stgn import numerics as nx
from stgn.numerics import STD_FLOOR, DimensionError, EmptyRegionError, NumericError, Rng, Tensor, grad_check

floats = st.floats(-1, 1, allow_nan=False, width=64)


# -- attention ----------------------------------------------------------------
def test_attention_single_key_returns_value(rng):
    q = rng.normal((3, 4))
    k = rng.normal((1, 4))
    v = rng.normal((1, 5))
    out = nx.attention(q, k, v).data
    np.testing.assert_array_equal(out, np.repeat(v, 3, axis=0))


def test_attention_equal_logits_average_values():
    q = np.array([[0.0, 0.0]])
    k = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    v = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 9.0]])
    np.testing.assert_allclose(nx.attention(q, k, v).data, [[3.0, 5.0]], atol=1e-15)


def test_attention_two_key_oracle():
    # softmax([10/sqrt(2), 0]) by scalar arithmetic
    a = 10 / np.sqrt(2)
    w0 = 1.0 / (1.0 + np.exp(-a))
    out = nx.attention(np.array([[10.0, 0.0]]), np.eye(2), np.eye(2)).data
    np.testing.assert_allclose(out, [[w0, 1 - w0]], atol=1e-15)
    np.testing.assert_allclose(out, [[0.99917, 0.00083]], atol=5e-5)


def test_attention_shape_errors_name_both_shapes():
    with pytest.raises(DimensionError, match=r"k\(2, 3\).*v\(4, 3\)"):
        nx.attention(np.zeros((1, 3)), np.zeros((2, 3)), np.zeros((4, 3)))
    with pytest.raises(DimensionError, match="q"):
        nx.attention(np.zeros((1, 2)), np.zeros((2, 3)), np.zeros((2, 3)))


def test_attention_key_mask_ignores_dropped_keys(rng):
    q, k, v = rng.normal((2, 4)), rng.normal((3, 4)), rng.normal((3, 2))
    full = nx.attention(q, k[:2], v[:2]).data
    masked = nx.attention(q, k, v, key_mask=np.array([True, True, False])).data
    np.testing.assert_allclose(masked, full, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-5, 5)), arrays(np.float64, (5, 4), elements=st.floats(-5, 5)))
def test_attention_weights_sum_to_one(q, k):
    out = nx.attention(q, k, np.eye(5)).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(out >= 0)


def test_attention_stable_for_huge_logits():
    out = nx.attention(np.array([[1e4, 0.0]]), np.eye(2), np.eye(2)).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [[1.0, 0.0]])


# -- masked moments / adain ---------------------------------------------------
def test_masked_moments_two_element_oracle():
    mu, sd = nx.masked_moments(np.array([[1.0], [2.0], [3.0], [4.0]]), np.array([1, 1, 0, 0]))
    assert mu.data.item() == 1.5
    assert sd.data.item() == 0.5


def test_masked_moments_threshold_is_half():
    x = np.array([[1.0], [2.0], [30.0]])
    mu, _ = nx.masked_moments(x, np.array([0.5, 0.5, 0.49]))
    assert mu.data.item() == 1.5


def test_masked_moments_constant_column_hits_floor():
    mu, sd = nx.masked_moments(np.full((5, 2), 3.0), np.ones(5))
    np.testing.assert_allclose(mu.data, [[3.0, 3.0]], atol=1e-15)
    np.testing.assert_array_equal(sd.data, [[STD_FLOOR, STD_FLOOR]])


def test_masked_moments_empty_mask_errors():
    with pytest.raises(EmptyRegionError):
        nx.masked_moments(np.ones((3, 2)), np.array([0.1, 0.2, 0.49]))


def test_adain_identity_stylization(rng):
    x = rng.normal((6, 3))
    np.testing.assert_allclose(nx.adain(x, x, np.ones(6)).data, x, atol=1e-6)


def test_adain_affine_oracle():
    # x = [0, 2]: mean 1, std 1; target mean 5, std 3 -> 3 * (x - 1) + 5
    ref = np.array([[5.0 - 3.0], [5.0 + 3.0]])  # population moments (5, 3)
    out = nx.adain(np.array([[0.0], [2.0]]), ref, np.ones(2)).data
    np.testing.assert_allclose(out.ravel(), [2.0, 8.0], atol=1e-12)


def test_adain_constant_input_maps_to_ref_mean(rng):
    ref = rng.normal((4, 2))
    out = nx.adain(np.full((3, 2), 7.0), ref, np.ones(4)).data
    np.testing.assert_allclose(out, np.broadcast_to(ref.mean(0), (3, 2)), atol=1e-12)


def test_adain_propagates_empty_region(rng):
    with pytest.raises(EmptyRegionError):
        nx.adain(rng.normal((3, 2)), rng.normal((3, 2)), np.zeros(3))


# -- gram ---------------------------------------------------------------------
def test_gram_oracle():
    np.testing.assert_array_equal(nx.gram_matrix(np.array([[1.0, 2.0], [3.0, 4.0]])).data, [[2.5, 5.5], [5.5, 12.5]])


def test_gram_zero_features():
    np.testing.assert_array_equal(nx.gram_matrix(np.zeros((3, 5))).data, np.zeros((3, 3)))


def test_gram_scale_law(rng):
    f = rng.normal((4, 9))
    np.testing.assert_allclose(nx.gram_matrix(3 * f).data, 9 * nx.gram_matrix(f).data, rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 6), elements=floats), arrays(np.float64, (3,), elements=floats))
def test_gram_symmetric_psd(f, z):
    g = nx.gram_matrix(f).data
    assert np.array_equal(g, g.T)
    assert z @ g @ z >= -1e-9


# -- grad_check ---------------------------------------------------------------
def test_grad_check_quadratic_exact(rng):
    x = rng.uniform(-1, 1, (3, 4))
    assert grad_check(lambda t: nx.tsum(t * t), x) < 1e-6


def test_grad_check_detects_wrong_gradient(rng):
    def bad(t):
        out = nx.tsum(t * t)
        return out * 1.0 + Tensor(np.sum(t.data ** 3))  # second term has no tape

    assert grad_check(bad, rng.uniform(0.5, 1, 4)) > 1e-2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_grad_check_non_finite_names_coordinate():
    with pytest.raises(NumericError, match="coordinate 0"):
        grad_check(lambda t: nx.tsum(nx.log(t)), np.array([1e-7, 1.0]), h=1e-5)


@pytest.mark.parametrize(
    "name, fn, shape",
    [
        ("gelu", nx.gelu, (3, 4)),
        ("silu", nx.silu, (3, 4)),
        ("softmax", nx.softmax, (3, 4)),
        ("layer_norm", nx.layer_norm, (3, 6)),
        ("sqrt", lambda t: nx.sqrt(t * t + 1.0), (5,)),
        ("div", lambda t: nx.div(t, t * t + 2.0), (5,)),
        ("exp", nx.exp, (5,)),
        ("patchify", lambda t: nx.patchify(t, 2), (1, 4, 4, 2)),
        ("area_downsample", lambda t: nx.area_downsample(t, 2), (2, 4, 4)),
        ("nearest_upsample", lambda t: nx.nearest_upsample(t, 2), (2, 3, 3)),
        ("getitem", lambda t: t[1:, ::2], (3, 4)),
        ("transpose", lambda t: nx.transpose(t, (1, 0)) @ t, (3, 4)),
        ("moments", lambda t: nx.concat(list(nx.moments(t)), axis=0), (5, 3)),
    ],
)
def test_elementwise_and_layout_grads(rng, name, fn, shape):
    x = rng.uniform(-1, 1, shape)
    out_shape = fn(Tensor(x)).shape
    w = Tensor(rng.child(name).normal(out_shape))
    assert grad_check(lambda t: nx.tsum(fn(t) * w), x) < 1e-6


def test_broadcast_add_reduces_gradient():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    nx.tsum(a + b).backward()
    np.testing.assert_array_equal(b.grad, [2.0, 2.0, 2.0])


def test_backward_populates_every_leaf(rng):
    a = Tensor(rng.normal((2, 2)), requires_grad=True)
    b = Tensor(rng.normal((2, 2)), requires_grad=True)
    c = Tensor(rng.normal((2, 2)))
    nx.tsum(a @ b + c).backward()
    assert a.grad is not None and b.grad is not None
    assert c.grad is None


def test_no_grad_builds_no_tape(rng):
    a = Tensor(rng.normal(3), requires_grad=True)
    with nx.no_grad():
        y = a * 2.0
    assert not y.requires_grad


# -- conv / resampling --------------------------------------------------------
def _conv_oracle(x, w, stride, pad):
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    kh, kw, _, co = w.shape
    B, H, W, _ = xp.shape
    Ho, Wo = (H - kh) // stride + 1, (W - kw) // stride + 1
    out = np.zeros((B, Ho, Wo, co))
    for b in range(B):
        for i in range(Ho):
            for j in range(Wo):
                patch = xp[b, i * stride : i * stride + kh, j * stride : j * stride + kw]
                out[b, i, j] = np.tensordot(patch, w, axes=([0, 1, 2], [0, 1, 2]))
    return out


@pytest.mark.parametrize("stride, pad", [(1, 0), (2, 1), (1, 1)])
def test_conv2d_matches_loop_oracle(rng, stride, pad):
    x = rng.normal((2, 7, 6, 3))
    w = rng.normal((3, 3, 3, 4))
    np.testing.assert_allclose(nx.conv2d(x, w, stride=stride, padding=pad).data, _conv_oracle(x, w, stride, pad), atol=1e-12)


def test_conv2d_channel_mismatch():
    with pytest.raises(DimensionError):
        nx.conv2d(np.zeros((1, 4, 4, 2)), np.zeros((3, 3, 3, 1)))


def test_patchify_roundtrip(rng):
    x = rng.normal((2, 8, 4, 3))
    tok = nx.patchify(x, 2)
    assert tok.shape == (2, 8, 12)
    np.testing.assert_array_equal(nx.unpatchify(tok, 2, 8, 4).data, x)


def test_area_downsample_half_cover():
    m = np.zeros((4, 4))
    m[:, :2] = 1
    assert nx.area_downsample(m, 4).data.item() == 0.5


def test_nearest_upsample_repeats():
    np.testing.assert_array_equal(nx.nearest_upsample(np.array([[1.0, 2.0]]), 2).data, [[1, 1, 2, 2], [1, 1, 2, 2]])


# -- rng ----------------------------------------------------------------------
def test_rng_reproducible_and_children_independent():
    a = Rng(7).child("x").normal(5)
    b = Rng(7).child("x").normal(5)
    c = Rng(7).child("y").normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_rng_child_unaffected_by_sibling_draws():
    r = Rng(3)
    first = r.child("a").normal(4)
    r.child("b").normal(1000)
    np.testing.assert_array_equal(r.child("a").normal(4), first)


def test_rng_state_roundtrip():
    r = Rng(11).child("s")
    r.normal(3)
    state = r.get_state()
    np.testing.assert_array_equal(Rng.from_state(state).normal(4), r.normal(4))


def test_rng_pinned_stream():
    # frozen first draws guard against silent changes to the stream derivation
    got = Rng(0).child("phi").normal(3)
    np.testing.assert_allclose(got, PINNED_PHI, rtol=0, atol=0)


PINNED_PHI = [-0.002425222833226698, -1.2138571662094466, 0.9247532718997205]

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowrank_conv.conv import ConvConfig, MacCounter, conv_direct, conv_separable, output_size
from lowrank_conv.decompose import FactorPair, decompose_closed_form, reconstruct
from lowrank_conv.errors import DimensionError

from .oracles import naive_conv


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_scalar_kernel_scales_input(rng):
    z = rng.standard_normal((1, 5, 4))
    out = conv_direct(z, np.full((1, 1, 1, 1), 2.0))
    np.testing.assert_array_equal(out, 2 * z)


@pytest.mark.parametrize("d", [1, 3, 5])
def test_delta_kernel_sums_channels(d, rng):
    z = rng.standard_normal((3, 7, 6))
    w = np.zeros((3, d, d, 2))
    w[:, d // 2, d // 2, :] = 1.0
    out = conv_direct(z, w, ConvConfig(padding=d // 2))
    for n in range(2):
        np.testing.assert_allclose(out[n], z.sum(axis=0), atol=1e-14)


@pytest.mark.parametrize("mode", ["correlation", "convolution"])
@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 1), (3, 2)])
def test_direct_matches_naive(mode, stride, padding, rng):
    z = rng.standard_normal((3, 8, 8))
    w = rng.standard_normal((3, 3, 3, 4))
    out = conv_direct(z, w, ConvConfig(stride, padding, mode))
    ref = naive_conv(z, w, stride, padding, flip=mode == "convolution")
    assert out.shape == ref.shape
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_direct_rectangular_kernel(rng):
    z = rng.standard_normal((2, 6, 7))
    w = rng.standard_normal((2, 2, 4, 3))
    np.testing.assert_allclose(conv_direct(z, w, ConvConfig(padding=1)), naive_conv(z, w, 1, 1), atol=1e-12)


def test_batched_equals_per_sample(rng):
    z = rng.standard_normal((4, 2, 6, 6))
    w = rng.standard_normal((2, 3, 3, 3))
    f = decompose_closed_form(w, 2)
    cfg = ConvConfig(2, 1)
    batch = conv_direct(z, w, cfg)
    sep = conv_separable(z, f, cfg)
    for b in range(4):
        np.testing.assert_allclose(batch[b], conv_direct(z[b], w, cfg), atol=1e-13)
        np.testing.assert_allclose(sep[b], conv_separable(z[b], f, cfg), atol=1e-13)


def test_separable_full_rank_equals_direct(rng):
    w = rng.standard_normal((3, 3, 3, 2))
    f = decompose_closed_form(w, 6)
    z = rng.standard_normal((3, 9, 9))
    assert rel(conv_separable(z, f), conv_direct(z, reconstruct(f))) <= 1e-10
    assert rel(conv_separable(z, f), conv_direct(z, w)) <= 1e-10


def test_zero_filters_zero_output(rng):
    f = FactorPair(np.zeros((2, 3, 2)), np.zeros((4, 3, 2)))
    out = conv_separable(rng.standard_normal((2, 5, 5)), f)
    assert out.shape == (4, 3, 3) and not out.any()


@settings(max_examples=80, deadline=None)
@given(
    C=st.integers(1, 4), N=st.integers(1, 4), K=st.integers(1, 4), d=st.integers(1, 5),
    Y=st.integers(5, 11), X=st.integers(5, 11), stride=st.integers(1, 3), padding=st.integers(0, 3),
    mode=st.sampled_from(["correlation", "convolution"]), seed=st.integers(0, 2**31),
)
def test_separable_direct_equivalence(C, N, K, d, Y, X, stride, padding, mode, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((C, Y, X))
    f = FactorPair(rng.standard_normal((K, d, C)), rng.standard_normal((N, d, K)))
    cfg = ConvConfig(stride, padding, mode)
    assert rel(conv_separable(z, f, cfg), conv_direct(z, reconstruct(f), cfg)) <= 1e-10


def test_separable_matches_naive(rng):
    f = FactorPair(rng.standard_normal((2, 3, 2)), rng.standard_normal((3, 3, 2)))
    z = rng.standard_normal((2, 7, 6))
    ref = naive_conv(z, np.asarray(reconstruct(f)), 2, 1)
    np.testing.assert_allclose(conv_separable(z, f, ConvConfig(2, 1)), ref, atol=1e-12)


def test_linearity(rng):
    w = rng.standard_normal((2, 3, 3, 3))
    f = decompose_closed_form(w, 2)
    z1, z2 = rng.standard_normal((2, 2, 8, 8))
    a = 2.7
    cfg = ConvConfig(1, 1)
    for conv, k in ((conv_direct, w), (conv_separable, f)):
        lhs = conv(a * z1 + z2, k, cfg)
        rhs = a * conv(z1, k, cfg) + conv(z2, k, cfg)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_mac_counts(rng):
    for _ in range(20):
        C, N, K = rng.integers(1, 6, size=3)
        d = int(rng.integers(1, 6))
        s, p = int(rng.integers(1, 4)), int(rng.integers(0, 3))
        Y, X = rng.integers(d, 14, size=2)
        z = rng.standard_normal((C, Y, X))
        f = FactorPair(rng.standard_normal((K, d, C)), rng.standard_normal((N, d, K)))
        cfg = ConvConfig(s, p)
        c1, c2 = MacCounter(), MacCounter()
        out = conv_direct(z, reconstruct(f), cfg, c1)
        conv_separable(z, f, cfg, c2)
        Yo, Xo = out.shape[1:]
        Y1, X1 = (Y + 2 * p - d) // s + 1, X
        assert c1.macs == d * d * N * C * Yo * Xo
        assert c2.macs == d * K * C * Y1 * X1 + d * N * K * Yo * Xo


def test_mac_counts_scale_with_batch(rng):
    w = rng.standard_normal((2, 3, 3, 2))
    c = MacCounter()
    conv_direct(rng.standard_normal((5, 2, 6, 6)), w, counter=c)
    assert c.macs == 5 * 9 * 4 * 16


def test_errors(rng):
    w = rng.standard_normal((2, 3, 3, 2))
    with pytest.raises(DimensionError):
        conv_direct(rng.standard_normal((3, 5, 5)), w)
    with pytest.raises(DimensionError):
        conv_direct(rng.standard_normal((2, 2, 2)), w)
    with pytest.raises(DimensionError):
        conv_separable(rng.standard_normal((3, 5, 5)), decompose_closed_form(w, 1))
    with pytest.raises(DimensionError):
        ConvConfig(stride=0)
    with pytest.raises(DimensionError):
        ConvConfig(padding=-1)
    with pytest.raises(ValueError):
        ConvConfig(mode="fft")


def test_output_size():
    assert output_size(32, 5, 0, 1) == 28
    assert output_size(32, 5, 2, 2) == 16
    assert output_size(2, 3, 1, 1) == 2
    with pytest.raises(DimensionError):
        output_size(2, 5, 1, 1)

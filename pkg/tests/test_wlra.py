import numpy as np
import pytest

from lowrank_conv.conv import ConvConfig, conv_direct
from lowrank_conv.decompose import decompose_closed_form, objective_e1, reconstruct
from lowrank_conv.errors import ArgumentError, DimensionError, RankError
from lowrank_conv.tensor import frobenius_norm_sq, matricize, svd
from lowrank_conv.wlra import (
    WeightMatrix,
    build_weight_matrix,
    extract_patches,
    stack_patches,
    weighted_als,
    weighted_objective,
)

from .oracles import brute_weighted, random_rank1_oracle


def test_single_patch_full_flip():
    p = extract_patches(np.array([[[1.0, 2.0], [3.0, 4.0]]]), 2, 1)
    assert p.shape == (1, 1, 2, 2)
    assert p[0, 0].tolist() == [[4, 3], [2, 1]]


def test_patch_count():
    assert extract_patches(np.zeros((1, 3, 3)), 2, 1).shape[0] == 4
    assert extract_patches(np.zeros((2, 7, 5)), 3, 2).shape == (6, 2, 3, 3)


def test_patch_order_row_major():
    z = np.arange(12.0).reshape(1, 3, 4)
    p = extract_patches(z, 2, 1)
    # position m = y * 3 + x, un-flipped top-left corner is z[y, x]
    for y in range(2):
        for x in range(3):
            assert p[y * 3 + x, 0, 1, 1] == z[0, y, x]


@pytest.mark.parametrize("stride", [1, 2])
def test_patch_inner_product_is_true_convolution(stride, rng):
    C, d, N = 3, 3, 2
    z = rng.standard_normal((C, 9, 8))
    w = rng.standard_normal((C, d, d, N))
    out = conv_direct(z, w, ConvConfig(stride=stride, mode="convolution"))
    p = extract_patches(z, d, stride)
    Xo = out.shape[2]
    for m in range(p.shape[0]):
        for n in range(N):
            val = sum(np.sum(w[c, :, :, n] * p[m, c]) for c in range(C))
            assert val == pytest.approx(out[n, m // Xo, m % Xo], abs=1e-12)


def test_patch_too_large():
    with pytest.raises(DimensionError):
        extract_patches(np.zeros((1, 3, 4)), 4)


def test_stack_patches_layout(rng):
    patch = rng.standard_normal((2, 3, 3))
    Z = stack_patches(patch, 4)
    assert Z.shape == (6, 12)
    for c in range(2):
        for i in range(3):
            for n in range(4):
                for j in range(3):
                    assert Z[c * 3 + i, n * 3 + j] == patch[c, i, j]


def test_weight_matrix_all_ones():
    g = build_weight_matrix([np.ones((2, 5, 5))], d=3, N=2)
    assert g.n_patches == 9
    np.testing.assert_array_equal(g.G, np.full((6, 6), 9.0))


def test_weight_matrix_one_by_one_hand():
    z = np.array([[[1.0, 2.0], [3.0, 4.0]], [[0.0, 1.0], [1.0, 0.0]]])
    g = build_weight_matrix([z], d=1, N=3)
    np.testing.assert_array_equal(g.G, [[30.0] * 3, [2.0] * 3])


def test_weight_matrix_matches_definition(rng):
    samples = [rng.standard_normal((2, 6, 5)) for _ in range(3)]
    N, d = 3, 3
    g = build_weight_matrix(samples, d, stride=2, N=N)
    G = np.zeros((2 * d, d * N))
    for z in samples:
        for patch in extract_patches(z, d, 2):
            Z = stack_patches(patch, N)
            G += Z * Z
    np.testing.assert_allclose(g.G, G, rtol=1e-13)
    assert np.all(g.G >= 0)
    for n in range(1, N):
        np.testing.assert_array_equal(g.G[:, n * d:(n + 1) * d], g.G[:, :d])


def test_weight_matrix_errors(rng):
    with pytest.raises(ArgumentError):
        build_weight_matrix([], 3)
    with pytest.raises(DimensionError):
        build_weight_matrix([np.zeros((2, 5, 5)), np.zeros((3, 5, 5))], 3)


def test_zero_channel_gives_zero_rows(rng):
    z = rng.standard_normal((2, 6, 6))
    z[1] = 0.0
    g = build_weight_matrix([z], d=3, N=2)
    assert not g.G[3:].any() and g.summary()["zero_rows"] == 3
    W = rng.standard_normal((6, 6))
    Wt = weighted_als(W, g, 1)
    # those residuals are free: changing W there does not move the objective
    W2 = W.copy()
    W2[3:] += 5.0
    assert weighted_objective(W2, Wt, g) == pytest.approx(weighted_objective(W, Wt, g))


def test_objective_cases(rng):
    W = rng.standard_normal((4, 6))
    Wt = rng.standard_normal((4, 6))
    G = rng.uniform(0, 2, (4, 6))
    assert weighted_objective(W, W, G) == 0
    assert weighted_objective(W, Wt, np.ones((4, 6))) == pytest.approx(frobenius_norm_sq(W - Wt), rel=1e-14)
    assert weighted_objective(W, Wt, G) == pytest.approx(brute_weighted(W, Wt, G), rel=1e-12)
    with pytest.raises(DimensionError):
        weighted_objective(W, Wt[:, :5], G)
    with pytest.raises(DimensionError):
        weighted_objective(W, Wt, G[:, :5])


def test_constant_weights_equal_e1(rng):
    w = rng.standard_normal((2, 3, 3, 2))
    f = decompose_closed_form(w, 2)
    ones = WeightMatrix(np.ones((6, 3)), 2)
    assert weighted_objective(matricize(w), matricize(reconstruct(f)), ones) == pytest.approx(objective_e1(w, f), rel=1e-14)


@pytest.mark.parametrize("init", ["svd", "random"])
def test_all_ones_reaches_truncated_svd(init, rng):
    W = rng.standard_normal((9, 12))
    K = 3
    best = float(np.sum(svd(W).s[K:] ** 2))
    Wt, trace = weighted_als(W, np.ones_like(W), K, init=init, max_iters=2000, return_trace=True)
    assert abs(trace[-1] - best) <= 1e-6 * best
    assert np.linalg.matrix_rank(Wt) <= K


def test_rank_one_weights_scale_out(rng):
    # G = c * ones scales the objective without moving the minimizer
    W = rng.standard_normal((6, 6))
    best = 4.0 * float(np.sum(svd(W).s[2:] ** 2))
    _, trace = weighted_als(W, np.full((6, 6), 4.0), 2, return_trace=True)
    assert abs(trace[-1] - best) <= 1e-6 * best


def test_exact_rank_k_goes_to_zero(rng):
    W = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
    G = rng.uniform(0.1, 3, W.shape)
    _, trace = weighted_als(W, G, 2, init="random", max_iters=3000, return_trace=True)
    assert trace[-1] <= 1e-10 * np.sum(G * W * W)


def test_trace_monotone(rng):
    for seed in range(20):
        W = rng.standard_normal((6, 6))
        G = rng.uniform(0, 1, W.shape) ** 3
        _, trace = weighted_als(W, G, 2, seed=seed, init="random", max_iters=200, return_trace=True)
        assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_small_instance_beats_random_oracle(rng):
    for t in range(5):
        W = rng.standard_normal((3, 3))
        G = rng.uniform(0.05, 1.0, (3, 3))
        got = weighted_objective(W, weighted_als(W, G, 1, restarts=8, seed=t), G)
        assert got <= random_rank1_oracle(W, G, n=20_000, seed=t) + 1e-6


def test_restarts_never_worse(rng):
    W = rng.standard_normal((5, 5))
    G = rng.uniform(0, 1, W.shape) ** 4
    one = weighted_objective(W, weighted_als(W, G, 2), G)
    many = weighted_objective(W, weighted_als(W, G, 2, restarts=4), G)
    assert many <= one


def test_deterministic(rng):
    W = rng.standard_normal((4, 4))
    G = rng.uniform(0, 1, W.shape)
    a = weighted_als(W, G, 2, seed=3, restarts=2)
    b = weighted_als(W, G, 2, seed=3, restarts=2)
    assert a.tobytes() == b.tobytes()


def test_als_errors(rng):
    W = rng.standard_normal((3, 4))
    with pytest.raises(ArgumentError):
        weighted_als(W, np.zeros_like(W), 1)
    with pytest.raises(ArgumentError):
        weighted_als(W, -np.ones_like(W), 1)
    with pytest.raises(RankError):
        weighted_als(W, np.ones_like(W), 4)
    with pytest.raises(DimensionError):
        weighted_als(W, np.ones((4, 3)), 1)

import numpy as np
import pytest

from lowrank_conv.conv import ConvConfig, conv_direct, conv_separable
from lowrank_conv.decompose import FactorPair, reconstruct
from lowrank_conv.errors import DimensionError
from lowrank_conv.train.layers import BatchNorm, Dense, LowRankConv
from lowrank_conv.train.model import build_model

from .gradcheck import LAYER_KINDS, TOL, layer_errors, random_layer_case, rel_err
from .oracles import central_difference


@pytest.mark.parametrize("kind", LAYER_KINDS)
def test_layer_gradients(kind, rng):
    for _ in range(8):
        layer, x = random_layer_case(kind, rng)
        errs = layer_errors(layer, x, rng)
        assert max(errs.values()) <= TOL, errs


def test_bn_inference_gradients(rng):
    layer = BatchNorm(3)
    layer.buffers["running_mean"][:] = rng.standard_normal(3)
    layer.buffers["running_var"][:] = rng.uniform(0.5, 2, 3)
    errs = layer_errors(layer, rng.standard_normal((4, 3, 2, 2)), rng, train=False)
    assert max(errs.values()) <= TOL


def tiny_spec():
    return {
        "input_shape": [1, 6, 6],
        "layers": [
            {"type": "lowrank-conv", "C": 1, "K": 2, "N": 3, "d": 3, "stride": 1, "padding": 1, "mid_bn": True},
            {"type": "bn", "channels": 3},
            {"type": "relu"},
            {"type": "dense", "in": 108, "out": 2},
            {"type": "softmax"},
        ],
    }


def test_model_gradients_against_finite_differences(rng):
    model = build_model(tiny_spec(), seed=1)
    x = rng.standard_normal((4, 1, 6, 6))
    y = np.array([0, 1, 1, 0])
    _, cache = model.forward(x)
    _, grads = model.backward(cache, y)

    def loss():
        logits, c = model.forward(x)
        return model.backward(c, y)[0]

    params = model.parameters()
    assert set(grads) == set(params)
    for name, p in params.items():
        num = central_difference(loss, p)
        assert rel_err(grads[name], num) <= TOL, name


def test_zero_upstream_gives_zero_grads(rng):
    model = build_model(tiny_spec(), seed=0)
    _, cache = model.forward(rng.standard_normal((3, 1, 6, 6)))
    grads = model.backward_logits(cache, np.zeros((3, 2)))
    assert all(not g.any() for g in grads.values())


def test_lowrank_layer_equals_separable_plus_bias(rng):
    layer = LowRankConv(2, 3, 4, 3, stride=2, padding=1, rng=rng)
    layer.params["b"][:] = rng.standard_normal(4)
    x = rng.standard_normal((2, 2, 7, 7))
    out, _ = layer.forward(x)
    f = FactorPair(layer.params["V"], layer.params["H"])
    cfg = ConvConfig(2, 1)
    ref = conv_separable(x, f, cfg) + layer.params["b"][:, None, None]
    np.testing.assert_allclose(out, ref, atol=1e-12)
    direct = conv_direct(x, reconstruct(f), cfg) + layer.params["b"][:, None, None]
    assert np.linalg.norm(out - direct) <= 1e-10 * np.linalg.norm(direct)


def test_bn_training_statistics(rng):
    bn = BatchNorm(3)
    x = rng.standard_normal((8, 3, 4, 4)) * 5 + 2
    _, (xhat, *_rest) = bn.forward(x, train=True)
    assert np.all(np.abs(xhat.mean(axis=(0, 2, 3))) <= 1e-6)
    assert np.all(np.abs(xhat.var(axis=(0, 2, 3)) - 1) <= 1e-4)


def test_bn_running_stats_and_inference(rng):
    bn = BatchNorm(2, momentum=0.9)
    x = rng.standard_normal((6, 2, 3, 3)) + 4
    bn.forward(x, train=True)
    np.testing.assert_allclose(bn.buffers["running_mean"], 0.1 * x.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(bn.buffers["running_var"], 0.9 + 0.1 * x.var(axis=(0, 2, 3)))
    # inference is a fixed affine map: f(a + b) - f(b) is linear in a
    a, b = rng.standard_normal((2, 1, 2, 3, 3))
    f = lambda t: bn.forward(t, train=False)[0]
    np.testing.assert_allclose(f(a + b) - f(b), f(2 * a + b) - f(a + b), atol=1e-12)
    before = bn.buffers["running_mean"].copy()
    bn.forward(x, train=False)
    np.testing.assert_array_equal(bn.buffers["running_mean"], before)


def test_closed_form_init(rng):
    layer = LowRankConv(2, 3, 4, 3, rng=rng, init="closed_form")
    assert np.linalg.matrix_rank(layer.params["V"].reshape(3, -1)) == 3


def test_shape_errors(rng):
    with pytest.raises(DimensionError):
        LowRankConv(2, 1, 1, 3).forward(np.zeros((1, 3, 5, 5)))
    with pytest.raises(DimensionError):
        Dense(4, 2).forward(np.zeros((1, 5)))
    with pytest.raises(DimensionError):
        BatchNorm(3).forward(np.zeros((1, 2, 2, 2)))
    with pytest.raises(DimensionError):
        build_model({"input_shape": [1, 6, 6], "layers": [{"type": "dense", "in": 7, "out": 2}]})

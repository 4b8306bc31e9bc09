import numpy as np
import pytest

from lowrank_conv import bench
from lowrank_conv.bench import bench_inputs, benchmark
from lowrank_conv.cost import LayerSpec
from lowrank_conv.errors import ArgumentError, NumericError


def test_sample_count():
    r = benchmark(LayerSpec(N=4, C=3, d=3), K=2, input_dims=(10, 10), repeats=5)
    assert len(r.direct.samples) == 5 and len(r.separable.samples) == 5
    assert r.direct.min <= r.direct.median
    assert r.max_relative_error <= 1e-10
    assert r.to_dict()["direct"]["samples"]


def test_above_break_even_still_runs():
    spec = LayerSpec(N=2, C=2, d=3)  # break-even rank 3
    r = benchmark(spec, K=4, input_dims=(8, 8), repeats=3)
    assert r.theoretical_speedup < 1
    assert r.measured_speedup > 0


def test_repeats_minimum():
    with pytest.raises(ArgumentError):
        benchmark(LayerSpec(N=2, C=2, d=3), K=1, input_dims=(8, 8), repeats=2)


def test_inputs_deterministic():
    spec = LayerSpec(N=3, C=2, d=3)
    z1, f1 = bench_inputs(spec, 2, (6, 6), seed=4)
    z2, f2 = bench_inputs(spec, 2, (6, 6), seed=4)
    assert z1.tobytes() == z2.tobytes() and f1.V.tobytes() == f2.V.tobytes() and f1.H.tobytes() == f2.H.tobytes()


def test_refuses_non_equivalent(monkeypatch):
    real = bench.conv_separable
    monkeypatch.setattr(bench, "conv_separable", lambda z, f, cfg: real(z, f, cfg) * (1 + 1e-6))
    with pytest.raises(NumericError):
        benchmark(LayerSpec(N=2, C=2, d=3), K=1, input_dims=(8, 8), repeats=3)


def test_strided_padded_layer():
    r = benchmark(LayerSpec(N=3, C=2, d=5, stride=2, padding=2), K=2, input_dims=(12, 9), repeats=3)
    assert np.isfinite(r.measured_speedup)

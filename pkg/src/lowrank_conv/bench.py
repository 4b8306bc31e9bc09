"""Wall-clock comparison of the direct and separable engines on one layer."""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .conv import ConvConfig, conv_direct, conv_separable
from .cost import layer_cost
from .decompose import FactorPair, reconstruct
from .errors import ArgumentError, NumericError

__all__ = ["TimingStats", "BenchReport", "benchmark", "bench_inputs"]

EQUIVALENCE_RTOL = 1e-10


@dataclass(frozen=True)
class TimingStats:
    samples: tuple
    min: float
    median: float
    mean: float

    @classmethod
    def from_samples(cls, samples):
        samples = tuple(float(t) for t in samples)
        return cls(samples, min(samples), statistics.median(samples), statistics.fmean(samples))


@dataclass(frozen=True)
class BenchReport:
    N: int
    C: int
    d: int
    K: int
    input_dims: tuple
    stride: int
    padding: int
    repeats: int
    threads: int
    direct: TimingStats
    separable: TimingStats
    measured_speedup: float
    theoretical_speedup: float
    max_relative_error: float
    cost: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def bench_inputs(spec, K, input_dims, seed):
    """Seeded random input maps and factor pair for a benchmark run."""
    rng = np.random.default_rng(seed)
    Y, X = input_dims
    z = rng.standard_normal((spec.C, Y, X))
    V = rng.standard_normal((K, spec.d, spec.C))
    H = rng.standard_normal((spec.N, spec.d, K))
    return z, FactorPair(V, H)


def _timed(fn, repeats):
    fn()  # warm-up, discarded
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return out


def benchmark(spec, K, input_dims, repeats=5, seed=0, threads=1):
    """Time both engines on identical random data.

    The outputs are compared before any timing; a relative Frobenius
    mismatch above 1e-10 raises :class:`NumericError`.  BLAS is limited to
    ``threads`` threads during the run.
    """
    if repeats < 3:
        raise ArgumentError(f"repeats must be >= 3, got {repeats}")
    cfg = ConvConfig(stride=spec.stride, padding=spec.padding)
    z, f = bench_inputs(spec, K, input_dims, seed)
    w = np.ascontiguousarray(reconstruct(f))

    with threadpool_limits(limits=threads):
        ref = conv_direct(z, w, cfg)
        sep = conv_separable(z, f, cfg)
        scale = max(np.linalg.norm(ref), np.finfo(float).tiny)
        err = float(np.linalg.norm(sep - ref) / scale)
        if not err <= EQUIVALENCE_RTOL:
            raise NumericError(f"separable output differs from direct by {err:.3e} (relative)")
        t_direct = _timed(lambda: conv_direct(z, w, cfg), repeats)
        t_sep = _timed(lambda: conv_separable(z, f, cfg), repeats)

    direct = TimingStats.from_samples(t_direct)
    separable = TimingStats.from_samples(t_sep)
    cost = layer_cost(spec, K)
    return BenchReport(
        N=spec.N,
        C=spec.C,
        d=spec.d,
        K=int(K),
        input_dims=tuple(input_dims),
        stride=spec.stride,
        padding=spec.padding,
        repeats=repeats,
        threads=threads,
        direct=direct,
        separable=separable,
        measured_speedup=direct.median / separable.median,
        theoretical_speedup=cost.theoretical_speedup,
        max_relative_error=err,
        cost=cost.to_dict(),
    )

"""
Running the factorized layer
============================

Two passes replace one: d x 1 filters mix C channels into K maps, then 1 x d
filters mix K maps into N outputs.  The output matches the dense kernel it
represents, while the multiply count drops from d^2 N C to d K (N + C) per
pixel.
"""

import numpy as np

from lowrank_conv import ConvConfig, LayerSpec, MacCounter, conv_direct, conv_separable, layer_cost, reconstruct
from lowrank_conv.bench import bench_inputs, benchmark

spec = LayerSpec(N=128, C=192, d=5)
K = 8

z, f = bench_inputs(spec, K, (32, 32), seed=0)
cfg = ConvConfig(stride=1, padding=2)

direct_count, sep_count = MacCounter(), MacCounter()
a = conv_direct(z, reconstruct(f), cfg, direct_count)
b = conv_separable(z, f, cfg, sep_count)
print("output", a.shape, " relative difference", np.linalg.norm(a - b) / np.linalg.norm(a))
print("MACs direct   ", direct_count.macs)
print("MACs separable", sep_count.macs, f"({direct_count.macs / sep_count.macs:.1f}x fewer)")

cost = layer_cost(spec, K)
print("per-pixel speedup", cost.theoretical_speedup, " break-even rank", cost.break_even_rank)
print("weight reduction  ", round(cost.weight_reduction, 2))

# wall clock, one BLAS thread
rep = benchmark(spec, K, (32, 32), repeats=5)
print(f"direct median {rep.direct.median * 1e3:.1f} ms, separable median {rep.separable.median * 1e3:.1f} ms")
print(f"measured {rep.measured_speedup:.1f}x vs theoretical {rep.theoretical_speedup:.0f}x")

# past the break-even rank the factorized form costs more
slow = layer_cost(spec, cost.break_even_rank + 10)
print("K =", slow.K, "speedup", round(slow.theoretical_speedup, 3))

"""
Data-weighted approximation
===========================

Measuring error on the layer's responses to real inputs instead of on the
weights themselves gives each kernel entry a weight: the energy of the
input pixels it multiplies.  No closed form exists for general weights, so
an alternating weighted least-squares heuristic is used.  With constant
weights it lands on the plain SVD answer.
"""

import numpy as np

from lowrank_conv import decompose_closed_form, matricize, reconstruct
from lowrank_conv.wlra import build_weight_matrix, extract_patches, weighted_als, weighted_objective

rng = np.random.default_rng(1)
C, d, N, K = 3, 3, 4, 2

# patches are flipped windows; <kernel, patch> is a true-convolution output
print(extract_patches(np.array([[[1.0, 2.0], [3.0, 4.0]]]), 2)[0, 0])

# inputs whose first channel is much louder than the others
maps = [rng.standard_normal((C, 12, 12)) * np.array([5.0, 1.0, 0.2])[:, None, None] for _ in range(8)]
g = build_weight_matrix(maps, d, N=N)
print("G", g.summary())

w = rng.standard_normal((C, d, d, N))
W = np.asarray(matricize(w))

plain = np.asarray(matricize(reconstruct(decompose_closed_form(w, K))))
weighted, trace = weighted_als(W, g, K, restarts=8, return_trace=True)
print("weighted error of the unweighted optimum", weighted_objective(W, plain, g))
print("weighted error after weighted ALS        ", weighted_objective(W, weighted, g))
print("trace non-increasing:", bool(np.all(np.diff(trace) <= 0)))

# constant weights: back to the SVD solution
ones = np.ones_like(W)
print("constant weights:", weighted_objective(W, weighted_als(W, ones, K), ones),
      "vs", weighted_objective(W, plain, ones))

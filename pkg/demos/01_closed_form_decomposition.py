"""
Closed-form low-rank factorization of a kernel
==============================================

A dense (C, d, d, N) kernel is flattened into a (C*d) x (d*N) matrix.  Rank
of that matrix is exactly the number of vertical/horizontal filter pairs
needed, so the best rank-K factors fall out of one SVD.
"""

import numpy as np

from lowrank_conv import decompose_als, decompose_closed_form, matricize, objective_e1, reconstruct, select_rank, svd

rng = np.random.default_rng(0)

# a kernel that is "almost" low rank: three separable parts plus a little noise
C, d, N = 16, 5, 32
w = sum(np.einsum("ci,nj->cijn", rng.standard_normal((C, d)), rng.standard_normal((N, d))) for _ in range(3))
w += 0.05 * rng.standard_normal(w.shape)

M = matricize(w)
print("matricized shape", M.shape)

s = svd(M).s
print("leading singular values", np.round(s[:6], 3))

# energy in sigma^2 picks the rank
K = select_rank(w, 0.95)
print("rank keeping 95% of sigma^2:", K)

# the objective at rank K is exactly the discarded energy
f = decompose_closed_form(w, K)
print("objective       ", objective_e1(w, f))
print("sum_(k>K) s_k^2 ", np.sum(s[K:] ** 2))

# factors: K vertical filters of length d per input channel, N*K horizontal ones
print("V", f.V.shape, " H", f.H.shape)

# rescaling one factor by a and the other by 1/a changes nothing
g = f.scaled(7.0)
print("max |reconstruct(f) - reconstruct(g)|", np.abs(reconstruct(f) - reconstruct(g)).max())

# an iterative solver for the same problem can only match it
for seed in range(3):
    als = objective_e1(w, decompose_als(w, K, max_iters=200, seed=seed))
    print(f"ALS seed {seed}: objective {als:.6f}")

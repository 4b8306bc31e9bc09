"""Independent reference computations used as test oracles.

Everything here is written with explicit Python loops or brute-force
enumeration and shares no code with the package under test.
"""

import numpy as np


def naive_conv(z, w, stride=1, padding=0, flip=False):
    """Quadruple-loop convolution of (C, Y, X) maps with a (C, dv, dh, N) kernel."""
    C, Y, X = z.shape
    _, dv, dh, N = w.shape
    zp = np.zeros((C, Y + 2 * padding, X + 2 * padding))
    zp[:, padding:padding + Y, padding:padding + X] = z
    Yo = (Y + 2 * padding - dv) // stride + 1
    Xo = (X + 2 * padding - dh) // stride + 1
    out = np.zeros((N, Yo, Xo))
    for n in range(N):
        for y in range(Yo):
            for x in range(Xo):
                acc = 0.0
                for c in range(C):
                    for i in range(dv):
                        for j in range(dh):
                            wi = dv - 1 - i if flip else i
                            wj = dh - 1 - j if flip else j
                            acc += zp[c, y * stride + i, x * stride + j] * w[c, wi, wj, n]
                out[n, y, x] = acc
    return out


def brute_sum_sq(a):
    total = 0.0
    for v in np.asarray(a, dtype=float).ravel():
        total += float(v) * float(v)
    return total


def brute_objective(w, V, H):
    """sum_{n,c} |W_n^c - sum_k H_n^k (V_k^c)^T|^2 by explicit loops over slices."""
    C, d, _, N = w.shape
    K = V.shape[0]
    total = 0.0
    for n in range(N):
        for c in range(C):
            approx = np.zeros((d, d))
            for k in range(K):
                for i in range(d):
                    for j in range(d):
                        approx[i, j] += V[k, i, c] * H[n, j, k]
            diff = w[c, :, :, n] - approx
            total += brute_sum_sq(diff)
    return total


def brute_weighted(W, Wt, G):
    total = 0.0
    for i in range(W.shape[0]):
        for j in range(W.shape[1]):
            total += G[i, j] * (W[i, j] - Wt[i, j]) ** 2
    return total


def central_difference(f, x, eps=1e-5):
    """Numerical gradient of scalar f at array x (modified in place, then restored)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + eps
        fp = f()
        x[idx] = old - eps
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * eps)
    return grad


def random_rank1_oracle(W, G, n=100_000, seed=0):
    """Best weighted objective over n random rank-1 directions, each optimally scaled."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, W.shape[0]))
    v = rng.standard_normal((n, W.shape[1]))
    P = u[:, :, None] * v[:, None, :]
    alpha = np.einsum("ij,nij->n", G * W, P) / np.einsum("ij,nij->n", G, P * P)
    R = W - alpha[:, None, None] * P
    return float(np.einsum("ij,nij->n", G, R * R).min())

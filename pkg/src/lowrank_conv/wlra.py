"""Data-dependent (weighted) low-rank approximation of a matricized kernel.

Measuring the approximation error on the responses to sample feature maps
turns the plain Frobenius objective into a weighted one,

    E(W~) = sum_ij G_ij (W_ij - W~_ij)^2,   rank(W~) <= K,

where ``G`` accumulates the squared (flipped) input patches each kernel tap
sees.  The problem is NP-hard in general, so :func:`weighted_als` is only a
local heuristic.  It is exact when ``G`` is constant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .conv import output_size
from .errors import ArgumentError, DimensionError, NumericError, RankError
from .tensor import as_matrix, svd

__all__ = [
    "WeightMatrix",
    "extract_patches",
    "stack_patches",
    "build_weight_matrix",
    "weighted_objective",
    "weighted_als",
]

log = logging.getLogger(__name__)

DAMPING = 1e-12


def extract_patches(z, d, stride=1):
    """All valid ``d x d`` windows of ``z`` (``(C, Y, X)``), each flipped in both axes.

    Returns an array of shape ``(P, C, d, d)`` with positions in row-major
    order.  For a kernel slice ``k``, ``<k, patches[m, c]>`` is the value of
    the true (kernel-flipping) convolution of ``z[c]`` with ``k`` at
    position ``m``.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 2:
        z = z[None]
    if z.ndim != 3:
        raise DimensionError(f"feature map must be (C, Y, X), got shape {z.shape}")
    C, Y, X = z.shape
    if d > min(Y, X):
        raise DimensionError(f"patch size {d} exceeds feature map {Y}x{X}")
    Yo = output_size(Y, d, 0, stride)
    Xo = output_size(X, d, 0, stride)
    win = np.lib.stride_tricks.sliding_window_view(z, (d, d), axis=(1, 2))
    win = win[:, ::stride, ::stride][:, :Yo, :Xo]
    # (C, Yo, Xo, d, d) -> (Yo*Xo, C, d, d), flipped
    return np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4).reshape(Yo * Xo, C, d, d)[:, :, ::-1, ::-1])


def stack_patches(patch, N):
    """The ``(C*d, d*N)`` matrix of one position: channel patches stacked vertically, tiled ``N`` times."""
    patch = np.asarray(patch, dtype=np.float64)
    C, d, _ = patch.shape
    return np.tile(patch.reshape(C * d, d), (1, N))


@dataclass(frozen=True)
class WeightMatrix:
    """Entrywise weights ``G`` for a ``(C*d, d*N)`` matricized kernel.

    Every ``d``-column block of ``G`` is the same ``(C*d, d)`` block, so only
    that block is stored; :attr:`G` expands it on demand.
    """

    block: np.ndarray
    N: int
    n_patches: int = 0

    @property
    def G(self):
        return np.tile(self.block, (1, self.N))

    @property
    def shape(self):
        return self.block.shape[0], self.block.shape[1] * self.N

    def summary(self):
        G = self.block
        return {
            "shape": list(self.shape),
            "n_patches": self.n_patches,
            "min": float(G.min()),
            "max": float(G.max()),
            "mean": float(G.mean()),
            "zero_rows": int(np.count_nonzero(~G.any(axis=1))),
        }


def build_weight_matrix(samples, d, stride=1, N=1):
    """``G = sum_{i,m} Z_im o Z_im`` over all samples and valid positions."""
    samples = list(samples)
    if not samples:
        raise ArgumentError("need at least one sample feature map")
    block = None
    count = 0
    C = None
    for z in samples:
        p = extract_patches(z, d, stride)
        if C is None:
            C = p.shape[1]
        elif p.shape[1] != C:
            raise DimensionError(f"sample has {p.shape[1]} channels, expected {C}")
        contrib = np.einsum("pcij,pcij->cij", p, p).reshape(C * d, d)
        block = contrib if block is None else block + contrib
        count += p.shape[0]
    return WeightMatrix(block, int(N), count)


def _weights(g, shape):
    G = g.G if isinstance(g, WeightMatrix) else np.asarray(g, dtype=np.float64)
    if G.shape != tuple(shape):
        raise DimensionError(f"weight matrix {G.shape} does not match {tuple(shape)}")
    return G


def weighted_objective(w, w_tilde, g):
    w = as_matrix(w)
    w_tilde = as_matrix(w_tilde)
    if w.shape != w_tilde.shape:
        raise DimensionError(f"shape mismatch {w.shape} vs {w_tilde.shape}")
    G = _weights(g, w.shape)
    r = w - w_tilde
    return float(np.sum(G * r * r))


def _row_solve(W, G, B):
    """Rows ``a_i = argmin sum_j G_ij (W_ij - a_i . b_j)^2`` (damped normal equations)."""
    K = B.shape[1]
    lhs = np.einsum("ij,jk,jl->ikl", G, B, B) + DAMPING * np.eye(K)
    rhs = np.einsum("ij,ij,jk->ik", G, W, B)
    return np.linalg.solve(lhs, rhs[..., None])[..., 0]


def weighted_als(w, g, K, max_iters=500, tol=1e-12, seed=0, init="svd", restarts=0, return_trace=False):
    """Heuristic rank-``K`` minimizer of the weighted objective.

    ``W~ = A @ B.T`` is refined by alternately solving the independent
    weighted least-squares problem of every row of ``A`` and then every row
    of ``B``.  ``init="svd"`` starts from the unweighted truncated SVD
    (already optimal for constant weights); ``init="random"`` draws unit
    columns from ``seed``.  Iteration stops when the relative improvement of
    a full sweep falls below ``tol`` or after ``max_iters`` sweeps.

    The objective is non-convex, so single runs can stall in a local
    minimum.  ``restarts`` extra runs from random starts (seeds derived from
    ``seed``) are made and the best result is kept.

    Returns the rank-``K`` matrix, and the objective trace (index 0 is the
    starting point) if ``return_trace`` is set.
    """
    W = as_matrix(w)
    G = _weights(g, W.shape)
    if np.any(G < 0):
        raise ArgumentError("weights must be non-negative")
    if not np.any(G > 0):
        raise ArgumentError("all-zero weight matrix makes the objective degenerate")
    if int(K) != K or not 1 <= K <= min(W.shape):
        raise RankError(f"rank K={K} outside [1, {min(W.shape)}]")
    K = int(K)

    best = _als_run(W, G, K, max_iters, tol, seed, init)
    children = np.random.SeedSequence(seed).spawn(restarts)
    for child in children:
        run = _als_run(W, G, K, max_iters, tol, child, "random")
        if run[1][-1] < best[1][-1]:
            best = run
    W_tilde, trace = best
    log.debug("weighted ALS: %d sweeps, objective %.6e -> %.6e", len(trace) - 1, trace[0], trace[-1])
    return (W_tilde, trace) if return_trace else W_tilde


def _als_run(W, G, K, max_iters, tol, seed, init):
    if init == "svd":
        res = svd(W)
        root = np.sqrt(res.s[:K])
        A, B = res.U[:, :K] * root, res.Q[:, :K] * root
    elif init == "random":
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((W.shape[0], K))
        B = rng.standard_normal((W.shape[1], K))
        A /= np.linalg.norm(A, axis=0)
        B /= np.linalg.norm(B, axis=0)
    else:
        raise ValueError(f"unknown init {init!r}")

    def objective(A, B):
        r = W - A @ B.T
        return float(np.sum(G * r * r))

    trace = [objective(A, B)]
    for it in range(max_iters):
        A_new = _row_solve(W, G, B)
        B_new = _row_solve(W.T, G.T, A_new)
        cur = objective(A_new, B_new)
        if not np.isfinite(cur):
            raise NumericError(f"weighted ALS produced a non-finite objective at sweep {it}")
        prev = trace[-1]
        if cur > prev:
            # damping can cost a rounding-level increase near a fixed point
            break
        A, B = A_new, B_new
        trace.append(cur)
        if prev - cur <= tol * prev:
            break
    return A @ B.T, trace

"""Rank-K vertical/horizontal factorization of convolution kernels.

A kernel ``w`` of shape ``(C, d, d, N)`` is approximated by

    w~[c, i, j, n] = sum_k V[k, i, c] * H[n, j, k]

i.e. each (c, n) slice is a sum of ``K`` outer products of a vertical
length-``d`` filter with a horizontal one.  Under :func:`~lowrank_conv.tensor.matricize`
this is exactly a rank-``K`` matrix, so the truncated SVD of the matricized
kernel gives the global minimizer of the squared Frobenius error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, RankError
from .tensor import as_kernel, frobenius_norm_sq, matricize, svd

__all__ = [
    "FactorPair",
    "max_rank",
    "factor_matrices",
    "factors_from_matrices",
    "decompose_closed_form",
    "reconstruct",
    "objective_e1",
    "tail_energy",
    "select_rank",
    "decompose_als",
]


@dataclass(frozen=True)
class FactorPair:
    """Vertical filters ``V`` with shape ``(K, d, C)`` and horizontal filters ``H`` with shape ``(N, d, K)``.

    ``V[k, :, c]`` is the d x 1 filter taking input channel ``c`` to
    intermediate channel ``k``; ``H[n, :, k]`` is the 1 x d filter taking
    intermediate channel ``k`` to output channel ``n``.
    """

    V: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        V = np.array(self.V, dtype=np.float64)
        H = np.array(self.H, dtype=np.float64)
        if V.ndim != 3 or H.ndim != 3:
            raise DimensionError(f"V and H must be 3D, got {V.shape} and {H.shape}")
        if V.shape[0] != H.shape[2] or V.shape[1] != H.shape[1]:
            raise DimensionError(f"incompatible factor shapes V{V.shape} H{H.shape}")
        if min(V.shape) < 1 or min(H.shape) < 1:
            raise DimensionError("factor dimensions must be positive")
        V.setflags(write=False)
        H.setflags(write=False)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "H", H)

    @property
    def K(self):
        return self.V.shape[0]

    @property
    def d(self):
        return self.V.shape[1]

    @property
    def C(self):
        return self.V.shape[2]

    @property
    def N(self):
        return self.H.shape[0]

    @property
    def dims(self):
        return self.C, self.d, self.N

    def scaled(self, alpha):
        """The equivalent pair ``(alpha * H, V / alpha)``."""
        if alpha == 0:
            raise ValueError("alpha must be non-zero")
        return FactorPair(self.V / alpha, self.H * alpha)


def max_rank(C, d, N):
    return min(C * d, N * d)


def _check_rank(K, C, d, N):
    if int(K) != K or not 1 <= K <= max_rank(C, d, N):
        raise RankError(f"rank K={K} outside [1, {max_rank(C, d, N)}] for C={C}, d={d}, N={N}")
    return int(K)


def factor_matrices(f):
    """Stacked factor matrices ``(A, B)`` with ``matricize(reconstruct(f)) == A @ B.T``.

    ``A`` is ``(C*d, K)`` (column k stacks ``V[k, :, c]`` over c) and ``B`` is
    ``(N*d, K)`` (column k stacks ``H[n, :, k]`` over n).
    """
    A = f.V.transpose(2, 1, 0).reshape(f.C * f.d, f.K)
    B = f.H.reshape(f.N * f.d, f.K)
    return A, B


def factors_from_matrices(A, B, dims):
    """Inverse of :func:`factor_matrices`."""
    C, d, N = dims
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise DimensionError(f"factor matrices {A.shape} and {B.shape} do not share a rank axis")
    if A.shape[0] != C * d or B.shape[0] != N * d:
        raise DimensionError(f"factor matrices {A.shape}, {B.shape} do not match dims {dims}")
    K = A.shape[1]
    return FactorPair(A.reshape(C, d, K).transpose(2, 1, 0), B.reshape(N, d, K))


def decompose_closed_form(w, K, svd_method="lapack"):
    """Globally optimal rank-``K`` factor pair of ``w``.

    Both factors carry ``sqrt(sigma_k)``; any rescaling ``(aH, V/a)`` is an
    equally good solution.  A zero kernel yields all-zero factors.
    """
    w = as_kernel(w)
    C, d, _, N = w.shape
    K = _check_rank(K, C, d, N)
    res = svd(matricize(w), method=svd_method)
    root = np.sqrt(res.s[:K])
    return factors_from_matrices(res.U[:, :K] * root, res.Q[:, :K] * root, (C, d, N))


def reconstruct(f, dims=None):
    """Dense ``(C, d, d, N)`` kernel represented by ``f``."""
    if dims is not None and tuple(int(x) for x in dims) != f.dims:
        raise DimensionError(f"dims {tuple(dims)} do not match factors {f.dims}")
    w = np.einsum("kic,njk->cijn", f.V, f.H)
    w.setflags(write=False)
    return w


def objective_e1(w, f):
    """Squared Frobenius error ``|w - reconstruct(f)|^2``."""
    w = as_kernel(w)
    C, d, _, N = w.shape
    if f.dims != (C, d, N):
        raise DimensionError(f"factors {f.dims} do not match kernel {(C, d, N)}")
    return frobenius_norm_sq(w - reconstruct(f))


def tail_energy(w, K):
    """``sum_{k > K} sigma_k^2`` of the matricized kernel: the optimal objective at rank ``K``."""
    s = svd(matricize(w)).s
    return float(np.sum(s[int(K):] ** 2))


def select_rank(w, energy_fraction=0.95, use_sigma_squared=True, rtol=1e-12):
    """Smallest ``K`` whose leading singular energy reaches ``energy_fraction`` of the total.

    Energy is ``sigma**2`` by default (variance, as in PCA); pass
    ``use_sigma_squared=False`` to accumulate raw singular values instead.
    The comparison allows ``rtol`` relative slack so that exactly-attained
    thresholds are not missed to rounding.
    """
    if not 0.0 < energy_fraction <= 1.0:
        raise ValueError(f"energy_fraction must lie in (0, 1], got {energy_fraction}")
    s = svd(matricize(w)).s
    e = s**2 if use_sigma_squared else s.copy()
    total = float(e.sum())
    if total == 0.0:
        raise RankError("zero kernel has no spectrum to select a rank from")
    cum = np.cumsum(e)
    hit = np.flatnonzero(cum >= energy_fraction * total - rtol * total)
    return int(hit[0]) + 1


def decompose_als(w, K, max_iters=100, seed=0, tol=0.0, return_trace=False):
    """Alternating least squares baseline for the same objective.

    Starts from random factors (columns normalized to unit length) and
    alternately solves for the stacked vertical and horizontal factors in
    closed form.  Each half-step is an exact least-squares solve, so the
    objective never increases.  Stops after ``max_iters`` iterations or when
    the relative improvement of one iteration drops below ``tol``.

    Returns the factor pair, plus the per-iteration objective (index 0 is
    the random start) when ``return_trace`` is set.
    """
    w = as_kernel(w)
    C, d, _, N = w.shape
    K = _check_rank(K, C, d, N)
    M = np.asarray(matricize(w))
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((C * d, K))
    B = rng.standard_normal((N * d, K))
    A /= np.linalg.norm(A, axis=0)
    B /= np.linalg.norm(B, axis=0)

    trace = [frobenius_norm_sq(M - A @ B.T)]
    for _ in range(max_iters):
        A = np.linalg.lstsq(B, M.T, rcond=None)[0].T
        B = np.linalg.lstsq(A, M, rcond=None)[0].T
        trace.append(frobenius_norm_sq(M - A @ B.T))
        prev, cur = trace[-2], trace[-1]
        if prev - cur <= tol * prev:
            break

    f = factors_from_matrices(A, B, (C, d, N))
    return (f, trace) if return_trace else f

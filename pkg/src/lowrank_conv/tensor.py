"""Dense kernel containers, the kernel <-> matrix bijection, and SVD.

Array conventions used throughout the package (all 0-based):

* kernel tensors have shape ``(C, d_v, d_h, N)``: input channels, vertical
  (row) extent, horizontal (column) extent, output channels;
* feature maps have shape ``(channels, Y, X)``, optionally with a leading
  batch axis;
* matrices are plain 2D ``float64`` arrays.

The matricization maps kernel entry ``(c, i, j, n)`` to matrix entry
``(c*d + i, n*d + j)``.  With 1-based indices this is the familiar
``j1 = (c-1)d + i``, ``j2 = (n-1)d + j``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimensionError, NumericError

__all__ = [
    "SvdResult",
    "as_kernel",
    "as_matrix",
    "kernel_dims",
    "matricize",
    "dematricize",
    "frobenius_norm_sq",
    "svd",
    "jacobi_svd",
    "numerical_rank",
]

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60


class SvdResult(NamedTuple):
    """Thin SVD ``m = U @ diag(s) @ Q.T`` with ``r = min(rows, cols)`` columns."""

    U: np.ndarray
    s: np.ndarray
    Q: np.ndarray

    @property
    def rank(self):
        return self.s.shape[0]

    def truncated(self, k):
        """Best rank-``k`` approximation of the decomposed matrix."""
        return (self.U[:, :k] * self.s[:k]) @ self.Q[:, :k].T


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def as_kernel(w, square=True):
    """Validate and return ``w`` as a read-only float64 ``(C, d, d, N)`` array."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4 or min(w.shape) < 1:
        raise DimensionError(f"kernel must be a non-empty 4D array, got shape {w.shape}")
    if square and w.shape[1] != w.shape[2]:
        raise DimensionError(f"kernel must be square, got d_v={w.shape[1]}, d_h={w.shape[2]}")
    return w


def as_matrix(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or min(m.shape) < 1:
        raise DimensionError(f"expected a non-empty 2D array, got shape {m.shape}")
    return m


def kernel_dims(w):
    """``(C, d, N)`` of a square kernel."""
    C, d, _, N = as_kernel(w).shape
    return C, d, N


def matricize(w):
    """Map a ``(C, d, d, N)`` kernel to its ``(C*d, d*N)`` matrix."""
    w = as_kernel(w)
    C, d, _, N = w.shape
    # (c, i, j, n) -> (c, i, n, j): rows run over (c, i), columns over (n, j)
    return _frozen(w.transpose(0, 1, 3, 2).reshape(C * d, N * d))


def dematricize(m, dims):
    """Inverse of :func:`matricize`; ``dims`` is ``(C, d, N)``."""
    m = as_matrix(m)
    C, d, N = (int(x) for x in dims)
    if min(C, d, N) < 1:
        raise DimensionError(f"dims must be positive, got {dims}")
    if m.shape != (C * d, d * N):
        raise DimensionError(f"matrix shape {m.shape} does not match dims {(C, d, N)}")
    return _frozen(m.reshape(C, d, N, d).transpose(0, 1, 3, 2))


def frobenius_norm_sq(t):
    t = np.asarray(t, dtype=np.float64)
    return float(np.vdot(t, t))


def numerical_rank(m, rtol=None):
    """Count singular values above ``rtol * s_max`` (default ``max(shape) * eps``)."""
    s = svd(m).s
    if s.size == 0 or s[0] == 0.0:
        return 0
    if rtol is None:
        rtol = max(np.shape(m)) * np.finfo(np.float64).eps
    return int(np.count_nonzero(s > rtol * s[0]))


def _fix_signs(U, Q):
    # largest-|.| entry of each left vector made positive; argmax returns the lowest index on ties
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, Q * signs


def _check_finite(m):
    if not np.all(np.isfinite(m)):
        raise NumericError("matrix contains non-finite entries")


def svd(m, method="lapack"):
    """Thin SVD with descending singular values and a fixed sign convention.

    ``method="lapack"`` calls ``numpy.linalg.svd``; ``method="jacobi"`` uses
    :func:`jacobi_svd`.  Both return identical conventions, so results agree
    up to rounding wherever singular values are distinct.
    """
    m = as_matrix(m)
    _check_finite(m)
    if method == "jacobi":
        return jacobi_svd(m)
    if method != "lapack":
        raise ValueError(f"unknown svd method {method!r}")
    U, s, Vh = np.linalg.svd(m, full_matrices=False)
    U, Q = _fix_signs(U, Vh.T)
    return SvdResult(_frozen(U), _frozen(s), _frozen(Q))


def _round_robin(n):
    """Yield ``n - 1`` (or ``n``) rounds of disjoint index pairs covering all pairs once."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    for _ in range(m - 1):
        p = np.array([players[i] for i in range(m // 2)])
        q = np.array([players[m - 1 - i] for i in range(m // 2)])
        keep = (p >= 0) & (q >= 0)
        p, q = p[keep], q[keep]
        yield np.minimum(p, q), np.maximum(p, q)
        players = [players[0]] + [players[-1]] + players[1:-1]


def _complete_basis(U, good):
    """Replace columns of ``U`` not flagged ``good`` by an orthonormal completion."""
    out = U.copy()
    basis = [out[:, j] for j in np.flatnonzero(good)]
    eye = np.eye(U.shape[0])
    candidates = iter(range(U.shape[0]))
    for j in np.flatnonzero(~good):
        while True:
            v = eye[:, next(candidates)].copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                break
        v /= nv
        out[:, j] = v
        basis.append(v)
    return out


def jacobi_svd(m, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """One-sided (Hestenes) Jacobi SVD.

    Rotations are applied on the smaller side of ``m``.  Each sweep visits every
    column pair once, in round-robin order so that the disjoint pairs of one
    round are rotated together.  Iteration stops after the first sweep in
    which every pair satisfies ``|a_p . a_q| <= tol * |a_p| |a_q|``, or after
    ``max_sweeps`` sweeps.
    """
    m = as_matrix(m)
    _check_finite(m)
    transposed = m.shape[0] < m.shape[1]
    A = (m.T if transposed else m).copy()
    rows, n = A.shape
    V = np.eye(n)

    for _ in range(max_sweeps):
        converged = True
        for p, q in _round_robin(n):
            if p.size == 0:
                continue
            ap, aq = A[:, p], A[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            scale = np.sqrt(alpha * beta)
            active = np.abs(gamma) > tol * scale
            if not np.any(active):
                continue
            converged = False
            p, q = p[active], q[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            sgn = np.where(zeta >= 0, 1.0, -1.0)
            t = sgn / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            ap, aq = A[:, p], A[:, q]
            A[:, p] = c * ap - s * aq
            A[:, q] = s * ap + c * aq
            vp, vq = V[:, p], V[:, q]
            V[:, p] = c * vp - s * vq
            V[:, q] = s * vp + c * vq
        if converged:
            break

    sigma = np.linalg.norm(A, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, A, V = sigma[order], A[:, order], V[:, order]
    smax = sigma[0] if sigma.size else 0.0
    good = sigma > max(rows, n) * np.finfo(np.float64).eps * smax
    U = np.zeros_like(A)
    U[:, good] = A[:, good] / sigma[good]
    if not np.all(good):
        U = _complete_basis(U, good)

    if transposed:
        U, V = V, U
    U, V = _fix_signs(U, V)
    return SvdResult(_frozen(U), _frozen(sigma), _frozen(V))

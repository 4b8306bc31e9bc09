"""Direct and two-stage separable 2D convolution on numpy arrays.

Feature maps are ``(C, Y, X)`` or batched ``(B, C, Y, X)``.  Both engines
loop over kernel taps and contract the channel axis with a matrix product,
so their cost is proportional to the multiply-accumulate counts reported by
:class:`MacCounter`.

The separable engine follows the vertical-then-horizontal order: stage 1
applies the ``d x 1`` filters with the vertical stride and padding, giving
``K`` maps of size ``Y1 x X``; stage 2 applies the ``1 x d`` filters with the
horizontal stride and padding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

__all__ = [
    "ConvConfig",
    "MacCounter",
    "output_size",
    "conv_direct",
    "conv_separable",
    "vertical_stage",
    "horizontal_stage",
]

MODES = ("correlation", "convolution")


@dataclass(frozen=True)
class ConvConfig:
    """Stride and zero padding (same on both axes) plus the kernel orientation.

    ``mode="correlation"`` is the usual CNN cross-correlation;
    ``mode="convolution"`` flips the kernel in both spatial axes first.
    """

    stride: int = 1
    padding: int = 0
    mode: str = "correlation"

    def __post_init__(self):
        if int(self.stride) != self.stride or self.stride < 1:
            raise DimensionError(f"stride must be a positive integer, got {self.stride}")
        if int(self.padding) != self.padding or self.padding < 0:
            raise DimensionError(f"padding must be a non-negative integer, got {self.padding}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


class MacCounter:
    """Accumulates the multiply-accumulate operations an engine actually performs."""

    def __init__(self):
        self.macs = 0

    def add(self, n):
        self.macs += int(n)


def output_size(n, d, padding, stride):
    out = (n + 2 * padding - d) // stride + 1
    if n + 2 * padding < d or out < 1:
        raise DimensionError(f"kernel extent {d} does not fit input {n} with padding {padding}")
    return out


def _as_maps(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim not in (3, 4) or min(z.shape) < 1:
        raise DimensionError(f"feature maps must be (C, Y, X) or (B, C, Y, X), got {z.shape}")
    return z


def _batch_size(z):
    return int(np.prod(z.shape[:-3], dtype=np.int64))


def _pad_axis(a, axis, p):
    if p == 0:
        return a
    width = [(0, 0)] * a.ndim
    width[axis] = (p, p)
    return np.pad(a, width)


def _taps(n_out, stride, offset):
    return slice(offset, offset + stride * (n_out - 1) + 1, stride)


def conv_direct(z, w, cfg=ConvConfig(), counter=None):
    """Dense convolution of maps ``z`` with kernel ``w`` of shape ``(C, d_v, d_h, N)``."""
    z = _as_maps(z)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4:
        raise DimensionError(f"kernel must be 4D, got shape {w.shape}")
    C, dv, dh, N = w.shape
    if z.shape[-3] != C:
        raise DimensionError(f"input has {z.shape[-3]} channels, kernel expects {C}")
    if cfg.mode == "convolution":
        w = w[:, ::-1, ::-1, :]
    s, p = cfg.stride, cfg.padding
    Yo = output_size(z.shape[-2], dv, p, s)
    Xo = output_size(z.shape[-1], dh, p, s)

    zt = np.moveaxis(z, -3, -1)
    zt = _pad_axis(_pad_axis(zt, -3, p), -2, p)
    out = np.zeros(z.shape[:-3] + (Yo, Xo, N))
    for i in range(dv):
        rows = _taps(Yo, s, i)
        for j in range(dh):
            out += zt[..., rows, _taps(Xo, s, j), :] @ w[:, i, j, :]
    if counter is not None:
        counter.add(dv * dh * C * N * Yo * Xo * _batch_size(z))
    return np.moveaxis(out, -1, -3)


def vertical_stage(zt, V, stride, padding):
    """Stage 1 on channel-last maps ``(..., Y, X, C)``; returns ``(..., Y1, X, K)``."""
    K, d, C = V.shape
    Y1 = output_size(zt.shape[-3], d, padding, stride)
    zp = _pad_axis(zt, -3, padding)
    out = np.zeros(zt.shape[:-3] + (Y1, zt.shape[-2], K))
    for i in range(d):
        out += zp[..., _taps(Y1, stride, i), :, :] @ V[:, i, :].T
    return out


def horizontal_stage(ut, H, stride, padding):
    """Stage 2 on channel-last maps ``(..., Y1, X, K)``; returns ``(..., Y1, Xo, N)``."""
    N, d, K = H.shape
    Xo = output_size(ut.shape[-2], d, padding, stride)
    up = _pad_axis(ut, -2, padding)
    out = np.zeros(ut.shape[:-2] + (Xo, N))
    for j in range(d):
        out += up[..., _taps(Xo, stride, j), :] @ H[:, j, :].T
    return out


def conv_separable(z, f, cfg=ConvConfig(), counter=None):
    """Convolve with the kernel represented by factor pair ``f`` without forming it.

    Equal (up to rounding) to ``conv_direct(z, reconstruct(f), cfg)``.
    """
    z = _as_maps(z)
    V, H = f.V, f.H
    if z.shape[-3] != V.shape[2]:
        raise DimensionError(f"input has {z.shape[-3]} channels, factors expect {V.shape[2]}")
    if cfg.mode == "convolution":
        V, H = V[:, ::-1, :], H[:, ::-1, :]
    s, p = cfg.stride, cfg.padding
    zt = np.moveaxis(z, -3, -1)
    u = vertical_stage(zt, V, s, p)
    out = horizontal_stage(u, H, s, p)
    if counter is not None:
        K, d, C = V.shape
        N = H.shape[0]
        b = _batch_size(z)
        Y1, X1 = u.shape[-3], u.shape[-2]
        Yo, Xo = out.shape[-3], out.shape[-2]
        counter.add(d * K * C * X1 * Y1 * b + d * N * K * Xo * Yo * b)
    return np.moveaxis(out, -1, -3)

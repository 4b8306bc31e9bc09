"""Layers with hand-written backward passes.

Every layer works on batched arrays: ``(B, C, Y, X)`` for feature maps and
``(B, F)`` after a :class:`Dense`.  ``forward`` returns ``(out, cache)`` and
``backward(dout, cache)`` returns ``(dx, grads)`` where ``grads`` has the same
keys as ``params``.
"""

from __future__ import annotations

import numpy as np

from ..conv import _pad_axis, _taps, horizontal_stage, output_size, vertical_stage
from ..decompose import decompose_closed_form
from ..errors import DimensionError

__all__ = [
    "Layer",
    "LowRankConv",
    "DirectConv",
    "BatchNorm",
    "ReLU",
    "Dense",
    "Softmax",
    "glorot_uniform",
    "LAYER_TYPES",
]


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    type_name = ""

    def __init__(self):
        self.params = {}
        self.buffers = {}

    def forward(self, x, train=True):
        raise NotImplementedError

    def backward(self, dout, cache):
        raise NotImplementedError

    def output_shape(self, shape):
        return shape

    def config(self):
        return {}

    def state(self):
        """Named arrays that fully determine the layer (parameters and running statistics)."""
        out = dict(self.params)
        out.update(self.buffers)
        return out

    def load_state(self, arrays):
        for name, arr in arrays.items():
            target = self.params if name in self.params else self.buffers
            if name not in target:
                raise KeyError(f"{self.type_name} has no array {name!r}")
            if np.shape(arr) != target[name].shape:
                raise DimensionError(f"{self.type_name}.{name}: shape {np.shape(arr)} != {target[name].shape}")
            target[name] = np.array(arr, dtype=np.float64)


class BatchNorm(Layer):
    """Per-channel batch normalization over every axis but axis 1.

    Running statistics follow ``r <- momentum * r + (1 - momentum) * batch``
    and are used, frozen, when ``train=False``.
    """

    type_name = "bn"

    def __init__(self, channels, eps=1e-5, momentum=0.9, axis=1):
        super().__init__()
        self.channels = int(channels)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.axis = axis
        self.params = {"gamma": np.ones(channels), "beta": np.zeros(channels)}
        self.buffers = {"running_mean": np.zeros(channels), "running_var": np.ones(channels)}

    def config(self):
        return {"channels": self.channels, "eps": self.eps, "momentum": self.momentum}

    def _bshape(self, x):
        shape = [1] * x.ndim
        shape[self.axis] = self.channels
        return tuple(shape)

    def output_shape(self, shape):
        if shape[self.axis - 1 if self.axis > 0 else self.axis] != self.channels:
            raise DimensionError(f"batch norm expects {self.channels} channels, got shape {shape}")
        return shape

    def forward(self, x, train=True):
        if x.shape[self.axis] != self.channels:
            raise DimensionError(f"batch norm expects {self.channels} channels, got {x.shape}")
        bs = self._bshape(x)
        axes = tuple(a for a in range(x.ndim) if a != self.axis % x.ndim)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mean
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(bs)) * inv_std.reshape(bs)
        out = self.params["gamma"].reshape(bs) * xhat + self.params["beta"].reshape(bs)
        return out, (xhat, inv_std, axes, train)

    def backward(self, dout, cache):
        xhat, inv_std, axes, train = cache
        bs = self._bshape(dout)
        grads = {"gamma": np.sum(dout * xhat, axis=axes), "beta": np.sum(dout, axis=axes)}
        dxhat = dout * self.params["gamma"].reshape(bs)
        if not train:
            return dxhat * inv_std.reshape(bs), grads
        m = dout.size // self.channels
        s1 = dxhat.sum(axis=axes).reshape(bs)
        s2 = (dxhat * xhat).sum(axis=axes).reshape(bs)
        dx = inv_std.reshape(bs) / m * (m * dxhat - s1 - xhat * s2)
        return dx, grads


class LowRankConv(Layer):
    """Rank-``K`` convolution: ``d x 1`` vertical filters (C -> K), then ``1 x d`` horizontal filters (K -> N), plus bias.

    With ``mid_norm=True`` a batch normalization over the ``K`` intermediate
    maps sits between the two stages; its parameters are exposed as
    ``mid.gamma`` / ``mid.beta``.
    """

    type_name = "lowrank-conv"

    def __init__(self, C, K, N, d, stride=1, padding=0, mid_norm=False, rng=None, init="glorot"):
        super().__init__()
        self.C, self.K, self.N, self.d = int(C), int(K), int(N), int(d)
        self.stride, self.padding = int(stride), int(padding)
        self.mid = BatchNorm(K, axis=-1) if mid_norm else None
        rng = np.random.default_rng(0) if rng is None else rng
        if init == "closed_form":
            dense = glorot_uniform(rng, (C, d, d, N), C * d * d, N * d * d)
            f = decompose_closed_form(dense, min(K, C * d, N * d))
            V = np.zeros((K, d, C))
            H = np.zeros((N, d, K))
            V[: f.K], H[:, :, : f.K] = f.V, f.H
        else:
            V = glorot_uniform(rng, (K, d, C), C * d, K * d)
            H = glorot_uniform(rng, (N, d, K), K * d, N * d)
        self.params = {"V": V, "H": H, "b": np.zeros(N)}
        if self.mid is not None:
            self.params["mid.gamma"] = self.mid.params["gamma"]
            self.params["mid.beta"] = self.mid.params["beta"]
            self.buffers = {"mid.running_mean": self.mid.buffers["running_mean"],
                            "mid.running_var": self.mid.buffers["running_var"]}

    def config(self):
        return {"C": self.C, "K": self.K, "N": self.N, "d": self.d,
                "stride": self.stride, "padding": self.padding, "mid_bn": self.mid is not None}

    def output_shape(self, shape):
        C, Y, X = shape
        if C != self.C:
            raise DimensionError(f"lowrank-conv expects {self.C} channels, got {C}")
        return (self.N, output_size(Y, self.d, self.padding, self.stride),
                output_size(X, self.d, self.padding, self.stride))

    def _sync_mid(self):
        self.mid.params["gamma"] = self.params["mid.gamma"]
        self.mid.params["beta"] = self.params["mid.beta"]
        self.mid.buffers["running_mean"] = self.buffers["mid.running_mean"]
        self.mid.buffers["running_var"] = self.buffers["mid.running_var"]

    def forward(self, x, train=True):
        if x.ndim != 4 or x.shape[1] != self.C:
            raise DimensionError(f"lowrank-conv expects (B, {self.C}, Y, X), got {x.shape}")
        s, p = self.stride, self.padding
        zt = np.moveaxis(x, 1, -1)
        u = vertical_stage(zt, self.params["V"], s, p)
        mid_cache = None
        if self.mid is not None:
            self._sync_mid()
            u, mid_cache = self.mid.forward(u, train)
            self.buffers["mid.running_mean"] = self.mid.buffers["running_mean"]
            self.buffers["mid.running_var"] = self.mid.buffers["running_var"]
        out = horizontal_stage(u, self.params["H"], s, p) + self.params["b"]
        return np.moveaxis(out, -1, 1), (zt, u, mid_cache)

    def backward(self, dout, cache):
        zt, u, mid_cache = cache
        s, p, d = self.stride, self.padding, self.d
        V, H = self.params["V"], self.params["H"]
        g = np.moveaxis(dout, 1, -1)  # (B, Y1, Xo, N)
        Xo = g.shape[2]
        grads = {"b": g.sum(axis=(0, 1, 2))}

        up = _pad_axis(u, -2, p)
        dup = np.zeros_like(up)
        dH = np.empty_like(H)
        for j in range(d):
            cols = _taps(Xo, s, j)
            dH[:, j, :] = np.einsum("byxn,byxk->nk", g, up[:, :, cols, :])
            dup[:, :, cols, :] += g @ H[:, j, :]
        grads["H"] = dH
        du = dup[:, :, p : p + u.shape[2], :]

        if self.mid is not None:
            du, mg = self.mid.backward(du, mid_cache)
            grads["mid.gamma"], grads["mid.beta"] = mg["gamma"], mg["beta"]

        Y1 = du.shape[1]
        zp = _pad_axis(zt, -3, p)
        dzp = np.zeros_like(zp)
        dV = np.empty_like(V)
        for i in range(d):
            rows = _taps(Y1, s, i)
            dV[:, i, :] = np.einsum("byxk,byxc->kc", du, zp[:, rows, :, :])
            dzp[:, rows, :, :] += du @ V[:, i, :]
        grads["V"] = dV
        dx = dzp[:, p : p + zt.shape[1], :, :]
        return np.moveaxis(dx, -1, 1), grads


class DirectConv(Layer):
    """Dense ``(C, d, d, N)`` convolution with bias (cross-correlation)."""

    type_name = "direct-conv"

    def __init__(self, C, N, d, stride=1, padding=0, rng=None):
        super().__init__()
        self.C, self.N, self.d = int(C), int(N), int(d)
        self.stride, self.padding = int(stride), int(padding)
        rng = np.random.default_rng(0) if rng is None else rng
        self.params = {"W": glorot_uniform(rng, (C, d, d, N), C * d * d, N * d * d), "b": np.zeros(N)}

    def config(self):
        return {"C": self.C, "N": self.N, "d": self.d, "stride": self.stride, "padding": self.padding}

    def output_shape(self, shape):
        C, Y, X = shape
        if C != self.C:
            raise DimensionError(f"direct-conv expects {self.C} channels, got {C}")
        return (self.N, output_size(Y, self.d, self.padding, self.stride),
                output_size(X, self.d, self.padding, self.stride))

    def forward(self, x, train=True):
        if x.ndim != 4 or x.shape[1] != self.C:
            raise DimensionError(f"direct-conv expects (B, {self.C}, Y, X), got {x.shape}")
        s, p, d = self.stride, self.padding, self.d
        W = self.params["W"]
        zp = _pad_axis(_pad_axis(np.moveaxis(x, 1, -1), 1, p), 2, p)
        Yo = output_size(x.shape[2], d, p, s)
        Xo = output_size(x.shape[3], d, p, s)
        out = np.zeros((x.shape[0], Yo, Xo, self.N))
        for i in range(d):
            for j in range(d):
                out += zp[:, _taps(Yo, s, i), _taps(Xo, s, j), :] @ W[:, i, j, :]
        out += self.params["b"]
        return np.moveaxis(out, -1, 1), (zp, x.shape)

    def backward(self, dout, cache):
        zp, xshape = cache
        s, p, d = self.stride, self.padding, self.d
        W = self.params["W"]
        g = np.moveaxis(dout, 1, -1)
        Yo, Xo = g.shape[1], g.shape[2]
        dW = np.empty_like(W)
        dzp = np.zeros_like(zp)
        for i in range(d):
            rows = _taps(Yo, s, i)
            for j in range(d):
                cols = _taps(Xo, s, j)
                dW[:, i, j, :] = np.einsum("byxc,byxn->cn", zp[:, rows, cols, :], g)
                dzp[:, rows, cols, :] += g @ W[:, i, j, :].T
        dx = dzp[:, p : p + xshape[2], p : p + xshape[3], :]
        return np.moveaxis(dx, -1, 1), {"W": dW, "b": g.sum(axis=(0, 1, 2))}


class ReLU(Layer):
    type_name = "relu"

    def forward(self, x, train=True):
        mask = x > 0
        return x * mask, mask

    def backward(self, dout, cache):
        return dout * cache, {}


class Dense(Layer):
    """Affine map of the flattened input: ``x.reshape(B, -1) @ W + b``."""

    type_name = "dense"

    def __init__(self, n_in, n_out, rng=None):
        super().__init__()
        self.n_in, self.n_out = int(n_in), int(n_out)
        rng = np.random.default_rng(0) if rng is None else rng
        self.params = {"W": glorot_uniform(rng, (n_in, n_out), n_in, n_out), "b": np.zeros(n_out)}

    def config(self):
        return {"in": self.n_in, "out": self.n_out}

    def output_shape(self, shape):
        if int(np.prod(shape)) != self.n_in:
            raise DimensionError(f"dense expects {self.n_in} inputs, got shape {shape}")
        return (self.n_out,)

    def forward(self, x, train=True):
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != self.n_in:
            raise DimensionError(f"dense expects {self.n_in} inputs, got {flat.shape[1]}")
        return flat @ self.params["W"] + self.params["b"], (flat, x.shape)

    def backward(self, dout, cache):
        flat, shape = cache
        grads = {"W": flat.T @ dout, "b": dout.sum(axis=0)}
        return (dout @ self.params["W"].T).reshape(shape), grads


class Softmax(Layer):
    """Class-probability head.  Models stop before it when producing logits."""

    type_name = "softmax"

    def forward(self, x, train=True):
        e = np.exp(x - x.max(axis=1, keepdims=True))
        p = e / e.sum(axis=1, keepdims=True)
        return p, p

    def backward(self, dout, cache):
        p = cache
        return p * (dout - np.sum(dout * p, axis=1, keepdims=True)), {}


LAYER_TYPES = {cls.type_name: cls for cls in (LowRankConv, DirectConv, BatchNorm, ReLU, Dense, Softmax)}

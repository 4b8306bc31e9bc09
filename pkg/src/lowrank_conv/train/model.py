"""Sequential models, the cross-entropy head, and plain SGD."""

from __future__ import annotations

import itertools

import numpy as np

from ..errors import DimensionError, StateError
from .layers import LAYER_TYPES, BatchNorm, Dense, DirectConv, LowRankConv, Softmax

__all__ = [
    "Model",
    "ForwardCache",
    "build_model",
    "softmax",
    "softmax_cross_entropy",
    "forward",
    "backward",
    "sgd_step",
]

_model_ids = itertools.count()


def softmax(logits):
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean multinomial logistic loss and its gradient w.r.t. the logits."""
    labels = np.asarray(labels)
    B = logits.shape[0]
    if labels.shape != (B,):
        raise DimensionError(f"expected {B} labels, got shape {labels.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(B), labels]))
    grad = softmax(logits)
    grad[np.arange(B), labels] -= 1.0
    return loss, grad / B


class ForwardCache:
    __slots__ = ("model_id", "version", "batch_size", "train", "layer_caches", "logits")

    def __init__(self, model_id, version, batch_size, train, layer_caches, logits):
        self.logits = logits
        self.model_id = model_id
        self.version = version
        self.batch_size = batch_size
        self.train = train
        self.layer_caches = layer_caches


class Model:
    """A stack of layers ending (optionally) in a :class:`Softmax` head.

    :meth:`forward` returns logits, i.e. it stops before the softmax; the
    loss couples softmax and cross-entropy for numerical stability.
    """

    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self._id = next(_model_ids)
        self.version = 0
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.output_shape = shape

    @property
    def body(self):
        if self.layers and isinstance(self.layers[-1], Softmax):
            return self.layers[:-1]
        return self.layers

    def parameters(self):
        return {f"{i}.{name}": arr for i, layer in enumerate(self.layers) for name, arr in layer.params.items()}

    def n_parameters(self):
        return int(sum(a.size for a in self.parameters().values()))

    def forward(self, x, train=True):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise DimensionError(f"model expects inputs of shape (B, {self.input_shape}), got {x.shape}")
        caches = []
        for layer in self.body:
            x, cache = layer.forward(x, train)
            caches.append(cache)
        return x, ForwardCache(self._id, self.version, x.shape[0], train, caches, x)

    def _check_cache(self, cache):
        if not isinstance(cache, ForwardCache) or cache.model_id != self._id:
            raise StateError("cache was not produced by this model")
        if cache.version != self.version:
            raise StateError("parameters changed since the cached forward pass")

    def backward_logits(self, cache, dlogits):
        """Parameter gradients given the gradient of the loss w.r.t. the logits."""
        self._check_cache(cache)
        if dlogits.shape[0] != cache.batch_size:
            raise StateError(f"gradient batch {dlogits.shape[0]} != cached batch {cache.batch_size}")
        grads = {}
        g = dlogits
        body = self.body
        for i in range(len(body) - 1, -1, -1):
            g, layer_grads = body[i].backward(g, cache.layer_caches[i])
            for name, arr in layer_grads.items():
                grads[f"{i}.{name}"] = arr
        return grads

    def backward(self, cache, labels):
        """Mean cross-entropy loss and gradients for every trainable array."""
        self._check_cache(cache)
        labels = np.asarray(labels)
        if labels.shape != (cache.batch_size,):
            raise StateError(f"{labels.shape[0] if labels.ndim else 0} labels for a cached batch of {cache.batch_size}")
        loss, dlogits = softmax_cross_entropy(cache.logits, labels)
        return loss, self.backward_logits(cache, dlogits)

    def predict_proba(self, x, batch_size=500):
        out = []
        for start in range(0, len(x), batch_size):
            logits, _ = self.forward(x[start : start + batch_size], train=False)
            out.append(softmax(logits))
        return np.concatenate(out)

    def predict(self, x, batch_size=500):
        return np.argmax(self.predict_proba(x, batch_size), axis=1)

    def to_spec(self):
        return {
            "input_shape": list(self.input_shape),
            "layers": [dict(type=layer.type_name, **layer.config()) for layer in self.layers],
        }


def build_model(spec, seed=0, init="glorot"):
    """Instantiate a model from a manifest-style dict (see :mod:`lowrank_conv.io`)."""
    rng = np.random.default_rng(seed)
    layers = []
    for entry in spec["layers"]:
        kind = entry["type"]
        if kind not in LAYER_TYPES:
            raise DimensionError(f"unknown layer type {kind!r}")
        if kind == "lowrank-conv":
            layer = LowRankConv(entry["C"], entry["K"], entry["N"], entry["d"],
                                entry.get("stride", 1), entry.get("padding", 0),
                                mid_norm=entry.get("mid_bn", False), rng=rng, init=init)
        elif kind == "direct-conv":
            layer = DirectConv(entry["C"], entry["N"], entry["d"],
                               entry.get("stride", 1), entry.get("padding", 0), rng=rng)
        elif kind == "bn":
            layer = BatchNorm(entry["channels"], entry.get("eps", 1e-5), entry.get("momentum", 0.9))
        elif kind == "dense":
            layer = Dense(entry["in"], entry["out"], rng=rng)
        else:
            layer = LAYER_TYPES[kind]()
        layers.append(layer)
    return Model(layers, spec["input_shape"])


def forward(model, batch, train=True):
    """``(logits, cache)`` for a batch of inputs."""
    return model.forward(batch, train)


def backward(model, cache, labels):
    """``(loss, grads)``; ``grads`` maps ``"<layer>.<param>"`` to arrays."""
    return model.backward(cache, labels)


def sgd_step(model, grads, lr):
    """In-place ``theta <- theta - lr * grad`` for every parameter named in ``grads``."""
    params = model.parameters()
    for name, g in grads.items():
        params[name] -= lr * g
    model.version += 1
    return model

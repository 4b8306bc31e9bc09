"""Mini-batch SGD training loop with a plateau-triggered step decay."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from ..errors import TrainingError
from .model import Model, build_model, sgd_step

__all__ = ["TrainConfig", "EpochRecord", "lr_schedule_update", "train", "evaluate", "lowrank_cnn_spec"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    initial_lr: float = 0.01
    lr_decay_factor: float = 10.0
    patience: int = 3
    max_epochs: int = 30
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        for name in ("batch_size", "initial_lr", "lr_decay_factor", "patience", "max_epochs", "threads"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_error: float

    def to_dict(self):
        return asdict(self)


def lr_schedule_update(history, config):
    """Learning rate for the epoch after ``history``.

    ``history`` holds :class:`EpochRecord` s (or dicts with ``lr`` and
    ``val_error``); each record's ``lr`` is the rate that epoch ran with.
    The rate is divided by ``config.lr_decay_factor`` once the best
    validation error seen so far has not improved for ``config.patience``
    epochs.  The count restarts after every decay, so one plateau cannot
    trigger two decays.
    """
    if not history:
        return config.initial_lr
    recs = [r if isinstance(r, dict) else r.to_dict() for r in history]
    lr = recs[-1]["lr"]
    run_start = len(recs) - 1
    while run_start > 0 and recs[run_start - 1]["lr"] == lr:
        run_start -= 1
    best = np.inf
    last_event = run_start - 1
    for i, r in enumerate(recs):
        if r["val_error"] < best:
            best = r["val_error"]
            last_event = max(last_event, i)
    stale = len(recs) - 1 - last_event
    if stale >= config.patience:
        return lr / config.lr_decay_factor
    return lr


def evaluate(model, split):
    """Classification error on ``split`` (inference mode)."""
    pred = model.predict(split.x)
    return float(np.mean(pred != split.y))


def _check_finite(value, epoch, what):
    if not np.isfinite(value):
        raise TrainingError(f"{what} became non-finite in epoch {epoch}", epoch=epoch)


def train(model, dataset, config=TrainConfig(), callback=None):
    """Train ``model`` (a :class:`Model` or a model spec dict) on ``dataset``.

    Returns ``(history, model)`` where ``history`` is a list of
    :class:`EpochRecord`.  ``history[0]`` has ``epoch == -1`` and holds the
    untrained model's mean training loss and validation error.  A non-finite
    loss raises :class:`TrainingError` carrying the epoch.
    """
    if not isinstance(model, Model):
        model = build_model(model, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    x, y = dataset.train.x, dataset.train.y
    n = len(y)
    history = []

    with threadpool_limits(limits=config.threads):
        saved = [{k: v.copy() for k, v in layer.buffers.items()} for layer in model.layers]
        init_losses = []
        for start in range(0, n, config.batch_size):
            logits, cache = model.forward(x[start : start + config.batch_size], train=True)
            init_losses.append(model.backward(cache, y[start : start + config.batch_size])[0])
        for layer, buffers in zip(model.layers, saved):
            layer.buffers.update(buffers)
        init_loss = float(np.mean(init_losses))
        _check_finite(init_loss, -1, "initial loss")
        history.append(EpochRecord(-1, 0.0, init_loss, evaluate(model, dataset.val)))

        lr = config.initial_lr
        for epoch in range(config.max_epochs):
            order = rng.permutation(n)
            losses = []
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                logits, cache = model.forward(x[idx], train=True)
                loss, grads = model.backward(cache, y[idx])
                _check_finite(loss, epoch, "training loss")
                sgd_step(model, grads, lr)
                losses.append(loss)
            val_error = evaluate(model, dataset.val)
            rec = EpochRecord(epoch, lr, float(np.mean(losses)), val_error)
            _check_finite(rec.train_loss, epoch, "training loss")
            history.append(rec)
            log.info("epoch %d lr %.2g loss %.4f val_error %.4f", epoch, lr, rec.train_loss, val_error)
            if callback is not None:
                callback(rec, model)
            lr = lr_schedule_update(history[1:], config)
    return history, model


def lowrank_cnn_spec(input_shape=(1, 16, 16), classes=4, ranks=(4, 8), channels=(8, 16), d=5):
    """Two rank-constrained conv blocks (batch norm after both stages, then ReLU) and a dense head.

    The second block uses stride 2.
    """
    C0, Y, X = input_shape
    K1, K2 = ranks
    N1, N2 = channels
    p = d // 2
    Y2, X2 = (Y + 2 * p - d) // 2 + 1, (X + 2 * p - d) // 2 + 1
    return {
        "input_shape": list(input_shape),
        "layers": [
            {"type": "lowrank-conv", "C": C0, "K": K1, "N": N1, "d": d, "stride": 1, "padding": p, "mid_bn": True},
            {"type": "bn", "channels": N1},
            {"type": "relu"},
            {"type": "lowrank-conv", "C": N1, "K": K2, "N": N2, "d": d, "stride": 2, "padding": p, "mid_bn": True},
            {"type": "bn", "channels": N2},
            {"type": "relu"},
            {"type": "dense", "in": N2 * Y2 * X2, "out": classes},
            {"type": "softmax"},
        ],
    }

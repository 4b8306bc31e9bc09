"""Synthetic oriented-grating classification data and a fixed-filter baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..conv import ConvConfig, conv_direct

__all__ = ["Split", "Dataset", "generate_synthetic_dataset", "orientation_of_class", "oriented_filter_baseline"]

FREQ_RANGE = (0.12, 0.22)  # cycles per pixel
ORIENTATION_JITTER = np.pi / 24


@dataclass(frozen=True)
class Split:
    x: np.ndarray  # (n, 1, Y, X)
    y: np.ndarray  # (n,) int labels

    def __len__(self):
        return len(self.y)


@dataclass(frozen=True)
class Dataset:
    train: Split
    val: Split
    test: Split
    classes: int

    @property
    def input_shape(self):
        return self.train.x.shape[1:]


def orientation_of_class(c, classes):
    return np.pi * c / classes


def _gratings(rng, labels, classes, dims, noise):
    Y, X = dims
    n = len(labels)
    yy, xx = np.meshgrid(np.arange(Y) - (Y - 1) / 2, np.arange(X) - (X - 1) / 2, indexing="ij")
    theta = orientation_of_class(labels, classes) + rng.uniform(-ORIENTATION_JITTER, ORIENTATION_JITTER, n)
    freq = rng.uniform(*FREQ_RANGE, n)
    phase = rng.uniform(0, 2 * np.pi, n)
    contrast = rng.uniform(0.6, 1.0, n)
    # theta is the orientation of the bars; the wave travels perpendicular to it
    proj = (-np.sin(theta)[:, None, None] * xx + np.cos(theta)[:, None, None] * yy)
    img = contrast[:, None, None] * np.cos(2 * np.pi * freq[:, None, None] * proj + phase[:, None, None])
    img += noise * rng.standard_normal(img.shape)
    return img[:, None]


def _split(rng, n_per_class, classes, dims, noise):
    labels = np.repeat(np.arange(classes), n_per_class)
    labels = labels[rng.permutation(len(labels))]
    return Split(_gratings(rng, labels, classes, dims, noise), labels)


def generate_synthetic_dataset(n_per_class, classes=4, dims=(16, 16), seed=0,
                               n_val_per_class=None, n_test_per_class=None, noise=1.0):
    """Noisy sinusoidal gratings whose bar orientation encodes the class.

    Class ``c`` has bars at angle ``pi * c / classes`` (jittered by up to
    7.5 degrees), random spatial frequency, phase and contrast, plus white
    Gaussian noise of standard deviation ``noise``.  Each split is exactly
    class-balanced; validation and test default to a quarter of the training
    size per class.  The same ``seed`` always reproduces the same arrays.
    """
    rng = np.random.default_rng(seed)
    n_val = n_val_per_class if n_val_per_class is not None else max(1, n_per_class // 4)
    n_test = n_test_per_class if n_test_per_class is not None else max(1, n_per_class // 4)
    return Dataset(
        train=_split(rng, n_per_class, classes, dims, noise),
        val=_split(rng, n_val, classes, dims, noise),
        test=_split(rng, n_test, classes, dims, noise),
        classes=classes,
    )


def _gabor_bank(classes, d, freqs):
    """Quadrature Gabor pairs, one group per class orientation: kernel ``(1, d, d, classes*2*len(freqs))``."""
    r = np.arange(d) - (d - 1) / 2
    yy, xx = np.meshgrid(r, r, indexing="ij")
    env = np.exp(-(xx**2 + yy**2) / (2 * (d / 4) ** 2))
    filters = []
    for c in range(classes):
        th = orientation_of_class(c, classes)
        proj = -np.sin(th) * xx + np.cos(th) * yy
        for f in freqs:
            filters.append(env * np.cos(2 * np.pi * f * proj))
            filters.append(env * np.sin(2 * np.pi * f * proj))
    bank = np.stack(filters, axis=-1)
    bank -= bank.mean(axis=(0, 1), keepdims=True)
    return bank[None], 2 * len(freqs)


def oriented_filter_baseline(x, classes, d=9, freqs=(0.12, 0.17, 0.22)):
    """Predict labels by the orientation whose Gabor bank responds with the most energy.

    No learning is involved, so its accuracy shows how separable the data
    is by small oriented filters alone.
    """
    bank, per_class = _gabor_bank(classes, d, freqs)
    resp = conv_direct(np.asarray(x, dtype=np.float64), bank, ConvConfig())
    energy = (resp**2).sum(axis=(-2, -1)).reshape(len(x), classes, per_class).sum(axis=-1)
    return np.argmax(energy, axis=1)

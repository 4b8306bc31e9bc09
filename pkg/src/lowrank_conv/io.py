"""On-disk formats: binary tensor files and JSON model manifests.

Tensor file layout (all integers little-endian)::

    offset  size      field
    0       4         magic b"LRCT"
    4       2 (u16)   format version (currently 1)
    6       1 (u8)    scalar type: 1 = float32, 2 = float64
    7       1 (u8)    rank R
    8       4*R (u32) dims
    8+4R    ...       row-major little-endian scalars, prod(dims) of them

Kernels are stored with axes ``(C, d_v, d_h, N)`` and feature maps with
``(channels, Y, X)``.  Vertical factors are written as ``(K, d, 1, C)`` and
horizontal factors as ``(N, 1, d, K)``.  Values are always returned as
float64.

A model manifest is a JSON document::

    {"schema": "lowrank-conv/manifest", "version": 1,
     "input_shape": [C, Y, X],
     "layers": [{"type": "lowrank-conv", "C": .., "K": .., "N": .., "d": ..,
                 "stride": .., "padding": .., "mid_bn": ..,
                 "params": {"V": "0_V.lrct", ...}}, ...]}

Layer types are ``lowrank-conv``, ``direct-conv``, ``bn``, ``relu``,
``dense`` and ``softmax``; ``params`` paths are relative to the manifest.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .decompose import FactorPair
from .errors import DimensionError, FormatError

__all__ = [
    "MAGIC",
    "VERSION",
    "write_tensor",
    "read_tensor",
    "write_factors",
    "read_factors",
    "save_model",
    "load_model",
    "save_dataset",
    "load_dataset",
    "MANIFEST_SCHEMA",
]

MAGIC = b"LRCT"
VERSION = 1
_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_TAG_OF = {"f32": 1, "f64": 2}
_HEADER = struct.Struct("<4sHBB")

MANIFEST_SCHEMA = "lowrank-conv/manifest"
MANIFEST_VERSION = 1


def write_tensor(path, array, dtype="f32"):
    if dtype not in _TAG_OF:
        raise ValueError(f"dtype must be 'f32' or 'f64', got {dtype!r}")
    tag = _TAG_OF[dtype]
    a = np.asarray(array, dtype=_TAGS[tag])
    if a.ndim > 255:
        raise DimensionError("rank too large for the tensor format")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, tag, a.ndim))
        fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
        fh.write(a.tobytes(order="C"))


def read_tensor(path, keep_dtype=False):
    """Load a tensor file.  Data is promoted to float64 unless ``keep_dtype``."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, tag, rank = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if tag not in _TAGS:
        raise FormatError(f"{path}: unknown scalar type tag {tag}")
    off = _HEADER.size
    if len(raw) < off + 4 * rank:
        raise FormatError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{rank}I", raw, off)
    off += 4 * rank
    dt = _TAGS[tag]
    expected = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(raw) - off != expected:
        raise FormatError(f"{path}: payload has {len(raw) - off} bytes, dims {dims} need {expected}")
    a = np.frombuffer(raw, dtype=dt, offset=off).reshape(dims)
    return a.copy() if keep_dtype else a.astype(np.float64)


def write_factors(prefix, f, dtype="f64"):
    """Write ``<prefix>_V.lrct`` and ``<prefix>_H.lrct``; returns the two paths."""
    pv, ph = Path(f"{prefix}_V.lrct"), Path(f"{prefix}_H.lrct")
    write_tensor(pv, f.V[:, :, None, :], dtype)
    write_tensor(ph, f.H[:, None, :, :], dtype)
    return pv, ph


def read_factors(v_path, h_path):
    V = read_tensor(v_path)
    H = read_tensor(h_path)
    if V.ndim != 4 or V.shape[2] != 1 or H.ndim != 4 or H.shape[1] != 1:
        raise FormatError(f"factor files must hold (K, d, 1, C) and (N, 1, d, K), got {V.shape}, {H.shape}")
    return FactorPair(V[:, :, 0, :], H[:, 0, :, :])


def save_model(model, directory, dtype="f32"):
    """Write every layer array plus ``manifest.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    spec = model.to_spec()
    for i, (entry, layer) in enumerate(zip(spec["layers"], model.layers)):
        files = {}
        for name, arr in layer.state().items():
            fname = f"{i}_{name.replace('.', '_')}.lrct"
            write_tensor(directory / fname, arr, dtype)
            files[name] = fname
        if files:
            entry["params"] = files
    manifest = {"schema": MANIFEST_SCHEMA, "version": MANIFEST_VERSION, **spec}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def read_manifest(path):
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    if doc.get("schema") != MANIFEST_SCHEMA or doc.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{path}: not a version-{MANIFEST_VERSION} model manifest")
    if "layers" not in doc or "input_shape" not in doc:
        raise FormatError(f"{path}: manifest needs 'input_shape' and 'layers'")
    return doc, path.parent


def load_model(path, seed=0):
    """Build the model a manifest describes and load any referenced arrays.

    Layers without a ``params`` entry keep their fresh initialization, so a
    manifest without files is also a valid model spec.
    """
    from .train.model import build_model

    doc, root = read_manifest(path)
    model = build_model(doc, seed=seed)
    for entry, layer in zip(doc["layers"], model.layers):
        files = entry.get("params", {})
        missing = [f for f in files.values() if not (root / f).is_file()]
        if missing:
            raise FormatError(f"manifest references missing files: {missing}")
        layer.load_state({name: read_tensor(root / f) for name, f in files.items()})
    return model


def save_dataset(directory, dataset, dtype="f32"):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("train", "val", "test"):
        split = getattr(dataset, name)
        write_tensor(directory / f"{name}_x.lrct", split.x, dtype)
        write_tensor(directory / f"{name}_y.lrct", split.y, dtype)
    return directory


def load_dataset(directory):
    from .train.data import Dataset, Split

    directory = Path(directory)
    splits = {}
    for name in ("train", "val", "test"):
        x = read_tensor(directory / f"{name}_x.lrct")
        y = read_tensor(directory / f"{name}_y.lrct")
        if x.ndim != 4 or y.shape != (x.shape[0],):
            raise FormatError(f"{directory}: {name} split has shapes {x.shape}, {y.shape}")
        splits[name] = Split(x, y.astype(np.int64))
    classes = int(max(s.y.max() for s in splits.values())) + 1
    return Dataset(classes=classes, **splits)

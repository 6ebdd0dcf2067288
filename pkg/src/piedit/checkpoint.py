"""Binary checkpoint container.

Layout (little endian)::

    b"PIE1" | u32 version | u64 n | n bytes of UTF-8 JSON config
    then, per tensor: u32 len | name | u8 dtype tag | u32 ndim | u64 * ndim shape | payload

The JSON block carries the model configuration, vocabulary, insert
dictionary, transformation table, their SHA-256 digests and the tensor count.
Writes go to a temporary file that is renamed into place on success.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .editspace.transforms import TransformRule, table_digest_rows
from .model import ModelConfig, PieModel, Vocab
from .numcore import OptimizerState

MAGIC = b"PIE1"
FORMAT_VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointDigestError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


def digest(obj):
    blob = json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def vocab_digests(model):
    return {
        "vocab": digest(model.vocab.tokens),
        "inserts": digest(model.inserts),
        "transforms": digest(table_digest_rows(model.table)),
    }


@dataclass
class Checkpoint:
    model: PieModel
    optimizer: OptimizerState | None = None
    meta: dict = field(default_factory=dict)


def _write_tensor(fh, name, arr):
    arr = np.ascontiguousarray(arr)
    tag = _TAGS.get(arr.dtype)
    if tag is None:
        raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
    raw = name.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)) + raw)
    fh.write(struct.pack("<BI", tag, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.astype(_DTYPES[tag], copy=False).tobytes())


def save_checkpoint(path, model, optimizer=None, meta=None):
    tensors = dict(model.state_arrays())
    opt_block = None
    if optimizer is not None:
        opt_block = {
            "step": optimizer.step,
            "learning_rate": optimizer.learning_rate,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps_stability": optimizer.eps_stability,
        }
        for n, m in optimizer.first_moment.items():
            tensors[f"optimizer.m.{n}"] = m
        for n, v in optimizer.second_moment.items():
            tensors[f"optimizer.v.{n}"] = v
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "mode": model.mode,
        "vocab": model.vocab.tokens,
        "inserts": model.inserts,
        "transforms": table_digest_rows(model.table),
        "digests": vocab_digests(model),
        "optimizer": opt_block,
        "tensor_names": list(tensors),
        "meta": meta or {},
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(blob)) + blob)
            for name, arr in tensors.items():
                _write_tensor(fh, name, arr)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"checkpoint truncated: needed {n} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_header(path):
    with open(path, "rb") as fh:
        data = fh.read()
    reader = _Reader(data)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, n = reader.unpack("<IQ")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    try:
        header = json.loads(reader.take(n).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt config block ({exc})") from None
    return header, reader


def load_checkpoint(path, expected_inserts=None, expected_table=None, expected_vocab=None):
    """Load a checkpoint, verifying its digests (and optionally the caller's dictionaries)."""
    header, reader = read_header(path)
    tensors = {}
    for _ in header["tensor_names"]:
        (name_len,) = reader.unpack("<I")
        name = reader.take(name_len).decode("utf-8")
        tag, ndim = reader.unpack("<BI")
        if tag not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype tag {tag} for {name}")
        shape = reader.unpack(f"<{ndim}Q")
        dtype = _DTYPES[tag]
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(reader.take(count * dtype.itemsize), dtype=dtype).reshape(shape)
        tensors[name] = arr.astype(dtype.newbyteorder("="), copy=True)
    if reader.pos != len(reader.data):
        raise CheckpointError(f"{path}: {len(reader.data) - reader.pos} unexpected trailing bytes")

    table_rows = header["transforms"]
    stored = {
        "vocab": digest(header["vocab"]),
        "inserts": digest(header["inserts"]),
        "transforms": digest(table_rows),
    }
    for key, value in stored.items():
        if header["digests"][key] != value:
            raise CheckpointDigestError(f"{path}: {key} digest does not match stored content")
    checks = {
        "inserts": None if expected_inserts is None else digest(list(expected_inserts)),
        "transforms": None if expected_table is None else digest(table_digest_rows(expected_table)),
        "vocab": None if expected_vocab is None else digest(list(expected_vocab)),
    }
    for key, value in checks.items():
        if value is not None and value != stored[key]:
            raise CheckpointDigestError(f"{path}: {key} digest mismatch with the supplied {key}")

    config = ModelConfig(**header["model_config"])
    table = [TransformRule(i, fam, a, b) for i, (fam, a, b) in enumerate(table_rows)]
    model = PieModel(config, Vocab(header["vocab"]), header["inserts"], table, mode=header["mode"])
    model.load_arrays({n: a for n, a in tensors.items() if not n.startswith("optimizer.")})

    optimizer = None
    if header.get("optimizer"):
        o = header["optimizer"]
        optimizer = OptimizerState(o["learning_rate"], o["beta1"], o["beta2"], o["eps_stability"], o["step"])
        for n, a in tensors.items():
            if n.startswith("optimizer.m."):
                optimizer.first_moment[n[len("optimizer.m."):]] = a
            elif n.startswith("optimizer.v."):
                optimizer.second_moment[n[len("optimizer.v."):]] = a
    return Checkpoint(model=model, optimizer=optimizer, meta=header.get("meta", {}))

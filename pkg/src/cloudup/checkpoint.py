"""Binary checkpoint serialization.

Layout, all integers little-endian u32:

    b"PCUF" | version | tensor_count
    per tensor: name_len | name utf-8 | rank | dims... | float64 LE payload

Tensors are written in sorted name order so identical parameter dicts
produce byte-identical files. Model hyperparameters ride along as rank-0
tensors under the "config." prefix.
"""

import struct

import numpy as np

from .errors import ContractError

MAGIC = b"PCUF"
VERSION = 1
CONFIG_PREFIX = "config."


def _tensor_payload(name, arr):
    encoded = name.encode("utf-8")
    parts = [struct.pack("<I", len(encoded)), encoded,
             struct.pack("<I", arr.ndim)]
    for dim in arr.shape:
        parts.append(struct.pack("<I", dim))
    parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(path, params, config=None):
    """Write parameter arrays (name -> ndarray or Tensor) plus scalar
    config values to path."""
    entries = {}
    for name, value in params.items():
        arr = np.asarray(getattr(value, "data", value), dtype=np.float64)
        entries[name] = arr
    for key, value in (config or {}).items():
        entries[CONFIG_PREFIX + key] = np.asarray(float(value))
    blob = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(entries))]
    for name in sorted(entries):
        blob.append(_tensor_payload(name, entries[name]))
    with open(path, "wb") as fh:
        fh.write(b"".join(blob))


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ContractError(f"{self.path}: truncated checkpoint")
        chunk = self.data[self.pos: self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path):
    """Read a checkpoint; returns (params, config) where params maps
    name -> float64 ndarray and config maps key -> float."""
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data, path)
    if r.take(4) != MAGIC:
        raise ContractError(f"{path}: not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise ContractError(f"{path}: unsupported checkpoint version {version}")
    count = r.u32()
    params = {}
    config = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape)
        arr = arr.astype(np.float64)  # writable copy in native order
        if name.startswith(CONFIG_PREFIX):
            config[name[len(CONFIG_PREFIX):]] = float(arr)
        else:
            params[name] = arr
    if r.pos != len(data):
        raise ContractError(f"{path}: trailing bytes after last tensor")
    return params, config

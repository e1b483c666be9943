"""Versioned binary container for models.

Layout (all integers little-endian)::

    8 bytes   magic  b"ASRQEBIN"
    uint32    format version
    uint64    header length in bytes
    header    UTF-8 JSON, sorted keys: {"kind", "tensors": [{"name", "shape"}], ...}
    payload   each tensor in header order, C-order float64 little-endian

The output is a pure function of the inputs, so identical models give
byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"ASRQEBIN"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


class ContainerError(ValueError):
    pass


def write(path: str | Path, kind: str, header: Mapping, tensors: Mapping[str, np.ndarray]) -> None:
    meta = dict(header)
    meta["kind"] = kind
    meta["tensors"] = [{"name": k, "shape": list(np.shape(v))} for k, v in tensors.items()]
    blob = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())


def read(path: str | Path) -> tuple[str, dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ContainerError(f"{path}: not a model container (bad magic)")
    if len(data) < 20:
        raise ContainerError(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != FORMAT_VERSION:
        raise ContainerError(
            f"{path}: format version {version} is not supported (this build reads version {FORMAT_VERSION})")
    offset = 8 + struct.calcsize("<IQ")
    header = json.loads(data[offset:offset + hlen].decode("utf-8"))
    offset += hlen
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        if n == 0:
            tensors[entry["name"]] = np.zeros(shape)
            continue
        if offset + n * _DTYPE.itemsize > len(data):
            raise ContainerError(f"{path}: truncated tensor {entry['name']!r}")
        arr = np.frombuffer(data, dtype=_DTYPE, count=n, offset=offset).reshape(shape)
        tensors[entry["name"]] = arr.astype(np.float64)
        offset += n * _DTYPE.itemsize
    if offset != len(data):
        raise ContainerError(f"{path}: {len(data) - offset} trailing bytes")
    return header["kind"], header, tensors

"""Versioned, byte-deterministic parameter checkpoints.

Layout (all integers little-endian)::

    b"TGNNCKPT"            8-byte magic
    uint32 version         currently 1
    uint64 header_len
    header                 UTF-8 JSON, keys sorted:
                           {"meta": {...}, "tensors": [{"name", "dtype",
                            "shape", "offset", "nbytes"}, ...]}
    payload                concatenated row-major little-endian arrays,
                           offsets relative to the payload start

Arrays are written in name order, so saving the same state twice yields the
same bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

MAGIC = b"TGNNCKPT"
FORMAT_VERSION = 1
_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8"), "i8": np.dtype("<i8")}


class CheckpointError(ValueError):
    pass


def _dtype_code(arr: np.ndarray) -> str:
    if arr.dtype == np.float32:
        return "f4"
    if arr.dtype == np.float64:
        return "f8"
    if np.issubdtype(arr.dtype, np.integer):
        return "i8"
    raise CheckpointError(f"unsupported dtype {arr.dtype}")


def dumps(arrays: Dict[str, np.ndarray], meta: Dict[str, Any] = None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        code = _dtype_code(arr)
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes(order="C")
        entries.append({"name": name, "dtype": code, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(header)),
                     header, *chunks])


def loads(blob: bytes) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", blob[8:12])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (header_len,) = struct.unpack("<Q", blob[12:20])
    header = json.loads(blob[20:20 + header_len].decode("utf-8"))
    payload = memoryview(blob)[20 + header_len:]
    arrays = {}
    for e in header["tensors"]:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype=_DTYPES[e["dtype"]]).reshape(e["shape"]).copy()
        arrays[e["name"]] = arr.astype(arr.dtype.newbyteorder("="))
    return arrays, header["meta"]


def save(path: Union[str, Path], arrays: Dict[str, np.ndarray], meta: Dict[str, Any] = None) -> None:
    Path(path).write_bytes(dumps(arrays, meta))


def load(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    return loads(Path(path).read_bytes())

"""Versioned parameter checkpoints with bit-exact round-trips.

Layout: an 8-byte magic, an 8-byte little-endian header length, a JSON
header (format version, metadata, and per-parameter name/shape/offset
entries in a fixed order), then the raw little-endian float64 buffers
concatenated in header order. Nothing in the file depends on wall-clock
time, so identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"LUMCKPT1"
FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray],
                    meta: dict | None = None) -> None:
    path = Path(path)
    entries = []
    buffers = []
    offset = 0
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        raw = arr.astype("<f8", copy=False).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset,
                        "nbytes": len(raw)})
        buffers.append(raw)
        offset += len(raw)
    header = {
        "version": FORMAT_VERSION,
        "meta": meta or {},
        "params": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in buffers:
            fh.write(raw)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        blob = fh.read()
    params: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(blob[start : start + nbytes], dtype="<f8").astype(np.float64)
        params[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return params, header["meta"]

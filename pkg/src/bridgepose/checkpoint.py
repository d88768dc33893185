"""Minimal binary checkpoint container (no pickle).

Layout, byte-exact:

* bytes 0..7    magic ``b"BRIDGEP1"``
* bytes 8..15   uint64 little-endian: byte length of the JSON header
* next N bytes  UTF-8 JSON header, canonical form
                (``sort_keys=True``, separators ``(",", ":")``)
* payload       the arrays' raw bytes, concatenated in header order

Header schema::

    {"arrays": [{"name": str, "dtype": str, "shape": [int, ...],
                 "offset": int, "nbytes": int}, ...],   # sorted by name
     "meta": <arbitrary JSON object>}

``dtype`` is the numpy dtype string (e.g. ``"<f4"``); arrays are stored
little-endian, C-order, with ``offset`` relative to the end of the header.
Loading memmaps nothing and copies nothing extra: the file must contain
exactly header + payload, or it is rejected.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"BRIDGEP1"


def _canonical_le(arr: np.ndarray) -> np.ndarray:
    # ascontiguousarray promotes 0-d arrays to 1-d; keep the original shape.
    arr = np.ascontiguousarray(arr).reshape(arr.shape)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    return arr


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = _canonical_le(np.asarray(arrays[name]))
        blob = arr.tobytes(order="C")
        entries.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"arrays": entries, "meta": meta},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (header_len,) = struct.unpack("<Q", raw[8:16])
    if 16 + header_len > len(raw):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16:16 + header_len].decode("utf-8"))
        entries = header["arrays"]
        meta = header["meta"]
    except (ValueError, KeyError) as err:
        raise CheckpointError(f"{path}: corrupt header: {err}") from err
    payload = raw[16 + header_len:]
    arrays: dict[str, np.ndarray] = {}
    end = 0
    for entry in entries:
        try:
            name, dtype = entry["name"], np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            offset, nbytes = entry["offset"], entry["nbytes"]
        except (TypeError, KeyError, ValueError) as err:
            raise CheckpointError(f"{path}: corrupt array entry: {err}") from err
        if offset + nbytes > len(payload):
            raise CheckpointError(f"{path}: array {name} overruns the payload")
        arr = np.frombuffer(payload[offset:offset + nbytes], dtype=dtype)
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(f"{path}: array {name} size/shape mismatch")
        arrays[name] = arr.reshape(shape).copy()
        end = max(end, offset + nbytes)
    if end != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - end} trailing bytes")
    return arrays, meta

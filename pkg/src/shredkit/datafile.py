"""Self-describing binary containers for datasets and pipeline state.

Dataset files ("SHDF") hold one named float64 array: magic, u32 format
version, the field id, a dtype code, axis count and lengths, then the
row-major little-endian payload. Everything is fixed-layout so identical
inputs produce byte-identical files.

The generic block container (used for manager state) pairs a JSON metadata
header with a sequence of float64 arrays whose shapes ride along in the
header.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

Array = np.ndarray

DATASET_MAGIC = b"SHDF"
DATASET_VERSION = 1
_DTYPE_F64 = 0


def write_dataset(path, field_id: str, array) -> None:
    """Write one named array as a dataset file."""
    data = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    ident = field_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<I", DATASET_VERSION))
        fh.write(struct.pack("<I", len(ident)))
        fh.write(ident)
        fh.write(struct.pack("<I", _DTYPE_F64))
        fh.write(struct.pack("<I", data.ndim))
        for n in data.shape:
            fh.write(struct.pack("<Q", n))
        fh.write(data.tobytes())


def read_dataset(path) -> tuple[str, Array]:
    """Read a dataset file back as (field id, array)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DATASET_MAGIC:
            raise ValueError(f"{path}: not a dataset file (magic {magic!r})")
        version = struct.unpack("<I", fh.read(4))[0]
        if version != DATASET_VERSION:
            raise ValueError(f"{path}: unsupported dataset version {version}")
        id_len = struct.unpack("<I", fh.read(4))[0]
        field_id = fh.read(id_len).decode("utf-8")
        dtype_code = struct.unpack("<I", fh.read(4))[0]
        if dtype_code != _DTYPE_F64:
            raise ValueError(f"{path}: unsupported dtype code {dtype_code}")
        ndim = struct.unpack("<I", fh.read(4))[0]
        shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim))
        payload = fh.read()
    expected = int(np.prod(shape, dtype=np.int64)) * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, expected "
                         f"{expected} for shape {shape}")
    return field_id, np.frombuffer(payload, dtype="<f8").reshape(shape).copy()


def dataset_checksum(array) -> str:
    """SHA-256 of the row-major float64 payload."""
    data = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    return hashlib.sha256(data.tobytes()).hexdigest()


def export_csv(path, array) -> None:
    """Dump a 2-D slice as plain CSV (full float64 precision)."""
    data = np.asarray(array, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"CSV export needs a 2-D array, got ndim={data.ndim}")
    with open(path, "w") as fh:
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def write_container(path, magic: bytes, meta: dict, arrays: list) -> None:
    """JSON header + float64 array blocks; shapes are recorded in the header."""
    arrays = [np.ascontiguousarray(np.asarray(a, dtype="<f8")) for a in arrays]
    header = dict(meta)
    header["__shapes__"] = [list(a.shape) for a in arrays]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(a.tobytes())


def read_container(path, magic: bytes) -> tuple[dict, list[Array]]:
    with open(path, "rb") as fh:
        got = fh.read(len(magic))
        if got != magic:
            raise ValueError(f"{path}: bad magic {got!r}, expected {magic!r}")
        version = struct.unpack("<I", fh.read(4))[0]
        if version != 1:
            raise ValueError(f"{path}: unsupported container version {version}")
        blob_len = struct.unpack("<Q", fh.read(8))[0]
        meta = json.loads(fh.read(blob_len).decode("utf-8"))
        payload = fh.read()
    shapes = [tuple(s) for s in meta.pop("__shapes__")]
    arrays = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape, dtype=np.int64))
        chunk = payload[offset:offset + 8 * count]
        if len(chunk) != 8 * count:
            raise ValueError(f"{path}: container payload truncated")
        arrays.append(np.frombuffer(chunk, dtype="<f8").reshape(shape).copy())
        offset += 8 * count
    if offset != len(payload):
        raise ValueError(f"{path}: container payload has trailing bytes")
    return meta, arrays

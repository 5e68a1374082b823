"""Low-level binary containers: tensor blobs and MLP weight files.

Everything is little-endian with fixed-size integers; no platform-dependent
sizes appear in any format. Byte layouts are documented in docs/formats.md.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import (
    MagicMismatchError,
    NonFiniteError,
    ShapeMismatchError,
    TruncatedFileError,
    VersionMismatchError,
)

TENSOR_MAGIC = b"GABEVTEN" + bytes([0, 0, 0, 0, 0, 0, 0, 1])
WEIGHTS_MAGIC = b"GABEVMLP"

DTYPE_F32 = 1
DTYPE_F64 = 2

_DTYPE_TO_CODE = {np.dtype("<f4"): DTYPE_F32, np.dtype("<f8"): DTYPE_F64}
_CODE_TO_DTYPE = {DTYPE_F32: np.dtype("<f4"), DTYPE_F64: np.dtype("<f8")}


def tensor_to_bytes(array: np.ndarray) -> bytes:
    """Serialize a float32/float64 array: magic, u32 rank, rank x u64 dims,
    u8 dtype code, then the row-major payload."""
    arr = np.ascontiguousarray(array)
    dtype = arr.dtype.newbyteorder("<")
    if dtype not in _DTYPE_TO_CODE:
        raise ShapeMismatchError(f"unsupported tensor dtype {arr.dtype}")
    code = _DTYPE_TO_CODE[dtype]
    out = bytearray()
    out += TENSOR_MAGIC
    out += struct.pack("<I", arr.ndim)
    for d in arr.shape:
        out += struct.pack("<Q", d)
    out += struct.pack("<B", code)
    out += arr.astype(dtype, copy=False).tobytes(order="C")
    return bytes(out)


def tensor_from_bytes(data: bytes, name: str = "tensor") -> np.ndarray:
    """Inverse of tensor_to_bytes. ``name`` labels error messages."""
    off = 0
    if len(data) < len(TENSOR_MAGIC) + 4:
        raise TruncatedFileError(f"{name}: shorter than the fixed header")
    if data[: len(TENSOR_MAGIC)] != TENSOR_MAGIC:
        raise MagicMismatchError(f"{name}: bad tensor magic")
    off = len(TENSOR_MAGIC)
    (rank,) = struct.unpack_from("<I", data, off)
    off += 4
    if rank > 8:
        raise ShapeMismatchError(f"{name}: implausible rank {rank}")
    if len(data) < off + 8 * rank + 1:
        raise TruncatedFileError(f"{name}: header truncated")
    dims = struct.unpack_from(f"<{rank}Q", data, off) if rank else ()
    off += 8 * rank
    (code,) = struct.unpack_from("<B", data, off)
    off += 1
    if code not in _CODE_TO_DTYPE:
        raise ShapeMismatchError(f"{name}: unknown dtype code {code}")
    dtype = _CODE_TO_DTYPE[code]
    count = 1
    for d in dims:
        count *= d
    expected = count * dtype.itemsize
    payload = data[off:]
    if len(payload) < expected:
        raise TruncatedFileError(
            f"{name}: payload has {len(payload)} bytes, expected {expected}"
        )
    if len(payload) > expected:
        raise ShapeMismatchError(f"{name}: trailing bytes after payload")
    arr = np.frombuffer(payload, dtype=dtype, count=count).reshape(dims)
    return np.ascontiguousarray(arr)


def write_tensor(path, array: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_bytes(array))


def read_tensor(path) -> np.ndarray:
    p = Path(path)
    return tensor_from_bytes(p.read_bytes(), name=p.name)


# MLP weight files: 8-byte magic, u32 JSON header length, UTF-8 JSON header,
# then float32 payloads for w1, b1, w2, b2 concatenated row-major.

_WEIGHT_SCHEMA = 1


def pack_mlp_weights(w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray) -> bytes:
    hidden, in_dim = w1.shape
    out_dim = w2.shape[0]
    header = {
        "schema": _WEIGHT_SCHEMA,
        "in_dim": int(in_dim),
        "hidden_dim": int(hidden),
        "out_dim": int(out_dim),
        "dtype": "f32",
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += WEIGHTS_MAGIC
    out += struct.pack("<I", len(hbytes))
    out += hbytes
    for arr in (w1, b1, w2, b2):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("weight entries must be finite")
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes(order="C")
    return bytes(out)


def unpack_mlp_weights(data: bytes, name: str = "weights"):
    """Returns (w1, b1, w2, b2) float32 arrays."""
    if len(data) < len(WEIGHTS_MAGIC) + 4:
        raise TruncatedFileError(f"{name}: shorter than the fixed header")
    if data[: len(WEIGHTS_MAGIC)] != WEIGHTS_MAGIC:
        raise MagicMismatchError(f"{name}: bad weight-file magic")
    off = len(WEIGHTS_MAGIC)
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + hlen:
        raise TruncatedFileError(f"{name}: JSON header truncated")
    try:
        header = json.loads(data[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ShapeMismatchError(f"{name}: unreadable JSON header: {exc}") from exc
    off += hlen
    if header.get("schema") != _WEIGHT_SCHEMA:
        raise VersionMismatchError(f"{name}: unsupported schema {header.get('schema')!r}")
    for key in ("in_dim", "hidden_dim", "out_dim"):
        if not isinstance(header.get(key), int) or header[key] < 1:
            raise ShapeMismatchError(f"{name}: header field {key!r} must be a positive int")
    if header.get("dtype") != "f32":
        raise ShapeMismatchError(f"{name}: unsupported weight dtype {header.get('dtype')!r}")
    in_dim, hidden, out_dim = header["in_dim"], header["hidden_dim"], header["out_dim"]
    counts = [hidden * in_dim, hidden, out_dim * hidden, out_dim]
    expected = 4 * sum(counts)
    payload = data[off:]
    if len(payload) < expected:
        raise TruncatedFileError(f"{name}: payload has {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise ShapeMismatchError(f"{name}: trailing bytes after payload")
    arrays = []
    pos = 0
    for count, shape in zip(counts, [(hidden, in_dim), (hidden,), (out_dim, hidden), (out_dim,)]):
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=pos).reshape(shape)
        arrays.append(np.ascontiguousarray(arr))
        pos += 4 * count
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{name}: weight entries must be finite")
    return tuple(arrays)

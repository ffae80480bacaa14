"""On-disk formats: NPY v1.0 weight matrices and the AMSQ v1 container.

AMSQ layout (all little-endian)::

    "AMSQ" | version u16 | scheme id u8 | k u8 | rows u32 | cols u32 |
    padded_cols u32 | scales: rows x binary16 | payload_len u64 | payload
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .packing import layout_of, padded_cols, payload_nbytes
from .quantizer import QuantizedTensor
from .schemes import SCHEME_IDS

__all__ = [
    "NpyParseError",
    "ContainerError",
    "read_npy",
    "write_npy",
    "load_npy",
    "save_npy",
    "amsq_to_bytes",
    "amsq_from_bytes",
    "load_amsq",
    "save_amsq",
]

MAGIC = b"AMSQ"
VERSION = 1
_HEADER = struct.Struct("<4sHBBIII")
_LEN = struct.Struct("<Q")
_NPY_DTYPES = ("<f4", "<f2")


class NpyParseError(ValueError):
    pass


class ContainerError(ValueError):
    pass


def read_npy(fp: BinaryIO) -> np.ndarray:
    """Read a 2-D little-endian float32/float16 NPY v1.0 array."""
    try:
        version = np.lib.format.read_magic(fp)
        if version != (1, 0):
            raise NpyParseError(f"unsupported NPY version {version}")
        shape, fortran_order, dtype = np.lib.format.read_array_header_1_0(fp)
    except NpyParseError:
        raise
    except (ValueError, SyntaxError, EOFError) as exc:
        raise NpyParseError(str(exc)) from exc
    if dtype.str not in _NPY_DTYPES:
        raise NpyParseError(f"unsupported dtype {dtype.str!r}; expected one of {_NPY_DTYPES}")
    if fortran_order:
        raise NpyParseError("fortran_order arrays are not supported")
    if len(shape) != 2:
        raise NpyParseError(f"expected a 2-D array, got shape {shape}")
    nbytes = int(np.prod(shape)) * dtype.itemsize
    data = fp.read(nbytes)
    if len(data) != nbytes:
        raise NpyParseError(f"truncated data: expected {nbytes} bytes, got {len(data)}")
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()


def write_npy(fp: BinaryIO, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array)
    if array.ndim != 2:
        raise ValueError("only 2-D arrays are written")
    if array.dtype.newbyteorder("<").str not in _NPY_DTYPES:
        raise ValueError(f"unsupported dtype {array.dtype}")
    np.lib.format.write_array(fp, array.astype(array.dtype.newbyteorder("<")), version=(1, 0), allow_pickle=False)


def load_npy(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fp:
        return read_npy(fp)


def save_npy(path: str | Path, array: np.ndarray) -> None:
    with open(path, "wb") as fp:
        write_npy(fp, array)


def amsq_to_bytes(qt: QuantizedTensor) -> bytes:
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, VERSION, qt.scheme.scheme_id, qt.scheme.k, qt.rows, qt.cols, qt.padded_cols))
    buf.write(qt.scales.astype("<f2").tobytes())
    payload = qt.payload_bytes()
    buf.write(_LEN.pack(len(payload)))
    buf.write(payload)
    return buf.getvalue()


def amsq_from_bytes(data: bytes) -> QuantizedTensor:
    if len(data) < _HEADER.size:
        raise ContainerError("truncated header")
    magic, version, scheme_id, k, rows, cols, pcols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    scheme = SCHEME_IDS.get(scheme_id)
    if scheme is None:
        raise ContainerError(f"unknown scheme id {scheme_id}")
    if k != scheme.k:
        raise ContainerError(f"group size {k} does not match scheme {scheme.name}")
    if rows == 0 or cols == 0:
        raise ContainerError("empty tensor")
    layout = layout_of(scheme)
    if pcols != padded_cols(cols, layout):
        raise ContainerError(f"padded_cols {pcols} inconsistent with cols {cols}")
    offset = _HEADER.size
    scale_end = offset + 2 * rows
    if len(data) < scale_end + _LEN.size:
        raise ContainerError("truncated scales")
    scales = np.frombuffer(data, dtype="<f2", count=rows, offset=offset).astype(np.float16)
    if not np.all(np.isfinite(scales) & (scales > 0)):
        raise ContainerError("scales must be positive and finite")
    (payload_len,) = _LEN.unpack_from(data, scale_end)
    expected = payload_nbytes(rows, cols, scheme)
    if payload_len != expected:
        raise ContainerError(f"payload_len {payload_len}, expected {expected}")
    start = scale_end + _LEN.size
    if len(data) != start + payload_len:
        raise ContainerError("payload length does not match file size")
    payload = np.frombuffer(data, dtype="<u2", offset=start).astype(np.uint16).reshape(rows, -1)
    return QuantizedTensor(scheme, rows, cols, pcols, scales, payload)


def load_amsq(path: str | Path) -> QuantizedTensor:
    return amsq_from_bytes(Path(path).read_bytes())


def save_amsq(path: str | Path, qt: QuantizedTensor) -> None:
    Path(path).write_bytes(amsq_to_bytes(qt))

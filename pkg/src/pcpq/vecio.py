"""fvecs / ivecs readers and writers.

Each record is a little-endian int32 dimension followed by that many
little-endian float32 (fvecs) or int32 (ivecs) values.
"""

from __future__ import annotations

import os

import numpy as np

from .core import Dataset


class VecFormatError(ValueError):
    pass


def _read(path, dtype, allow_empty: bool) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        if not allow_empty:
            raise VecFormatError(f"{path}: empty file")
        return np.zeros((0, 0), dtype=dtype)
    if raw.size < 4:
        raise VecFormatError(f"{path}: truncated record header at byte 0")
    dim = int(raw[:4].view("<i4")[0])
    if dim <= 0:
        raise VecFormatError(f"{path}: non-positive dimension {dim} at byte 0")
    rec = 4 * (dim + 1)
    if raw.size % rec:
        full = raw.size // rec
        raise VecFormatError(f"{path}: truncated record at byte {full * rec}")
    words = raw.view("<i4").reshape(-1, dim + 1)
    bad = np.flatnonzero(words[:, 0] != dim)
    if bad.size:
        raise VecFormatError(f"{path}: inconsistent dimension {int(words[bad[0], 0])} "
                             f"at byte {int(bad[0]) * rec} (expected {dim})")
    body = raw.reshape(-1, rec)[:, 4:].copy()
    return body.view(np.dtype(dtype).newbyteorder("<")).astype(dtype)


def read_fvecs(path, allow_empty: bool = False) -> np.ndarray:
    return _read(path, np.float32, allow_empty)


def read_ivecs(path, allow_empty: bool = False) -> np.ndarray:
    return _read(path, np.int32, allow_empty)


def read_dataset(path) -> Dataset:
    return Dataset(read_fvecs(path), source=os.fspath(path))


def _write(path, arr, dtype) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise VecFormatError("expected a 2-D array")
    n, dim = arr.shape
    out = np.empty((n, dim + 1), dtype="<i4")
    out[:, 0] = dim
    out[:, 1:] = np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<")).view("<i4")
    with open(path, "wb") as fh:
        fh.write(out.tobytes())


def write_fvecs(data, path) -> None:
    if isinstance(data, Dataset):
        data = data.data
    _write(path, data, np.float32)


def write_ivecs(data, path) -> None:
    _write(path, data, np.int32)

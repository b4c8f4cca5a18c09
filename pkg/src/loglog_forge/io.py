"""CSV and binary snapshot I/O. Floats are written with 17 significant
digits and LF line endings so identical runs give identical bytes."""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import ParameterOutOfRange

MAGIC = b"RNLS"
VERSION = 1


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def _parse(s: str):
    try:
        return float(s)
    except ValueError:
        return s


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[_parse(x) for x in row] for row in r]
    return header, rows


def read_columns(path) -> dict:
    header, rows = read_csv(path)
    cols = list(zip(*rows)) if rows else [[] for _ in header]
    out = {}
    for name, col in zip(header, cols):
        try:
            out[name] = np.array(col, dtype=float)
        except (TypeError, ValueError):
            out[name] = list(col)
    return out


def write_snapshot_binary(path, r, values) -> Path:
    """"RNLS", u32 version, u64 N, then little-endian float64 r[N], Re[N], Im[N]."""
    r = np.ascontiguousarray(r, dtype="<f8")
    v = np.asarray(values, dtype=complex)
    if r.shape != v.shape or r.ndim != 1:
        raise ParameterOutOfRange("r and values must be 1D of equal length")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, r.size))
        fh.write(r.tobytes())
        fh.write(np.ascontiguousarray(v.real, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(v.imag, dtype="<f8").tobytes())
    return Path(path)


def read_snapshot_binary(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ParameterOutOfRange("not an RNLS snapshot")
    version, n = struct.unpack("<IQ", data[4:16])
    if version != VERSION:
        raise ParameterOutOfRange(f"unsupported snapshot version {version}")
    arr = np.frombuffer(data[16:], dtype="<f8")
    if arr.size != 3 * n:
        raise ParameterOutOfRange("truncated snapshot")
    return arr[:n].copy(), arr[n:2 * n] + 1j * arr[2 * n:]


def write_snapshot_csv(path, t: float, r, values) -> Path:
    v = np.asarray(values, dtype=complex)
    return write_csv(path, ["t", "r", "Re u", "Im u"],
                     ([t, ri, vi.real, vi.imag] for ri, vi in zip(r, v)))

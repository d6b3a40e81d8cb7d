"""Binary snapshots and CSV time series.

Snapshot layout (all integers little-endian uint32)::

    b"BIAXFLD1" | version=1 | ndim | dims[ndim] | nfields
    per field: name_len | name (utf-8) | float64 LE values, x index fastest
"""

from __future__ import annotations

import csv
import struct
from dataclasses import astuple, dataclass, fields

import numpy as np

from .errors import FormatError, IoError, TruncatedFile, ValidationError

MAGIC = b"BIAXFLD1"
VERSION = 1

TIMESERIES_HEADER = (
    "step,time,kinetic,dirichlet_n,dirichlet_m,total,visc_dissip,dir_dissip,budget_residual,"
    "max_norm_err_n,max_norm_err_m,max_dot_nm,max_local_energy,concentration_fired"
)


@dataclass
class Snapshot:
    dims: tuple
    fields: dict

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        for name, arr in self.fields.items():
            if np.shape(arr) != self.dims:
                raise ValidationError(f"field {name!r} has shape {np.shape(arr)}, expected {self.dims}", "fields")

    def __eq__(self, other):
        if not isinstance(other, Snapshot) or self.dims != other.dims:
            return False
        if list(self.fields) != list(other.fields):
            return False
        return all(
            np.asarray(a, "<f8").tobytes() == np.asarray(b, "<f8").tobytes()
            for a, b in zip(self.fields.values(), other.fields.values())
        )


def state_snapshot(state) -> Snapshot:
    """Snapshot of a FlowState (velocity, pressure, directors)."""
    out = {"u_x": state.u.values[0], "u_y": state.u.values[1], "P": state.P.values}
    out.update(director_fields(state.directors))
    return Snapshot(state.grid.shape, out)


def director_fields(directors) -> dict:
    out = {}
    for name, arr in (("n", directors.n), ("m", directors.m)):
        for c, axis in enumerate("xyz"):
            out[f"{name}_{axis}"] = arr[c]
    return out


def encode_snapshot(snap: Snapshot) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(snap.dims))]
    parts.append(struct.pack(f"<{len(snap.dims)}I", *snap.dims))
    parts.append(struct.pack("<I", len(snap.fields)))
    for name, arr in snap.fields.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(np.asarray(arr, dtype="<f8").ravel(order="F").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"need {n} bytes at offset {self.pos}, file has {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, count=1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count))
        return vals if count > 1 else vals[0]


def decode_snapshot(data: bytes) -> Snapshot:
    r = _Reader(data)
    magic = r.take(len(MAGIC))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    version = r.u32()
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    ndim = r.u32()
    if ndim not in (2, 3):
        raise FormatError(f"bad ndim {ndim}")
    dims = tuple(int(d) for d in np.atleast_1d(r.u32(ndim)))
    count = r.u32()
    size = int(np.prod(dims))
    out = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        values = np.frombuffer(r.take(8 * size), dtype="<f8").astype(float)
        out[name] = values.reshape(dims, order="F")
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes")
    return Snapshot(dims, out)


def write_snapshot(snap, path):
    if not isinstance(snap, Snapshot):
        snap = state_snapshot(snap)
    try:
        with open(path, "wb") as fh:
            fh.write(encode_snapshot(snap))
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_snapshot(path) -> Snapshot:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return decode_snapshot(data)


@dataclass
class StepRecord:
    step: int
    time: float
    kinetic: float
    dirichlet_n: float
    dirichlet_m: float
    total: float
    visc_dissip: float
    dir_dissip: float
    budget_residual: float
    max_norm_err_n: float
    max_norm_err_m: float
    max_dot_nm: float
    max_local_energy: float
    concentration_fired: int


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_timeseries(records, path):
    records = list(records)
    if not records:
        raise ValidationError("time series needs at least one record", "records")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(TIMESERIES_HEADER + "\n")
            for rec in records:
                fh.write(",".join(_fmt(v) for v in astuple(rec)) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_timeseries(path):
    kinds = [f.type for f in fields(StepRecord)]
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or ",".join(rows[0]) != TIMESERIES_HEADER:
        raise FormatError("unexpected time-series header")
    out = []
    for row in rows[1:]:
        vals = [int(v) if k == "int" else float(v) for v, k in zip(row, kinds)]
        out.append(StepRecord(*vals))
    return out

"""Bit-exact output formats: diagnostic CSV and the CSIM1 snapshot binary.

Floating-point cells use Python's shortest round-trip repr, so re-running an
identical config reproduces byte-identical files and diffs stay meaningful.

CSIM1 layout (little endian): magic b"CSIM1", u32 d, u32 N, f64 L, f64 t,
u32 field count; then per field a 16-byte space-padded ASCII name followed
by N^d f64 row-major samples.
"""

from __future__ import annotations

import struct

import numpy as np

from .spectral import Grid, ScalarField

__all__ = [
    "CSV_COLUMNS",
    "MAGIC",
    "write_timeseries",
    "write_snapshot",
    "read_snapshot",
    "read_timeseries_column",
    "SnapshotWriter",
]

CSV_COLUMNS = (
    "t", "m_e", "m_s", "m_c", "mass_diff",
    "L1_e", "L2_e", "L4_e", "Linf_e",
    "L1_s", "L2_s", "L4_s", "Linf_s",
    "grad_c_Linf", "entropy_s", "enstrophy",
    "H1_e", "H1_s", "min_e", "min_s",
)

MAGIC = b"CSIM1"
_HEADER = struct.Struct("<IIddI")


def _cell(value) -> str:
    return "" if value is None else repr(float(value))


def write_timeseries(history, path) -> str:
    """One header row, then one row per diagnostic record."""
    lines = [",".join(CSV_COLUMNS)]
    for rec in history.records:
        lines.append(",".join(_cell(getattr(rec, col)) for col in CSV_COLUMNS))
    text = "\n".join(lines) + "\n"
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write time series to {path}: {exc}") from exc
    return str(path)


def read_timeseries_column(path, column: str):
    """(times, values) arrays for one CSV column, skipping empty cells."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise OSError(f"cannot read time series from {path}: {exc}") from exc
    if not lines:
        raise ValueError(f"{path}: empty CSV")
    header = lines[0].split(",")
    if column not in header or "t" not in header:
        raise ValueError(f"{path}: no column {column!r} (have {', '.join(header)})")
    ti, ci = header.index("t"), header.index(column)
    ts, vs = [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        if ci < len(cells) and cells[ci] != "":
            ts.append(float(cells[ti]))
            vs.append(float(cells[ci]))
    return np.array(ts), np.array(vs)


def write_snapshot(path, grid: Grid, t: float, fields) -> str:
    """Write named fields at one time; `fields` maps name -> ScalarField/array."""
    blobs = [MAGIC, _HEADER.pack(grid.d, grid.N, grid.L, t, len(fields))]
    for name, f in fields.items():
        raw = name.encode("ascii")
        if len(raw) > 16:
            raise ValueError(f"snapshot field name {name!r} exceeds 16 bytes")
        values = f.values if isinstance(f, ScalarField) else np.asarray(f)
        if values.shape != grid.shape:
            raise ValueError(f"snapshot field {name!r} does not match the grid")
        blobs.append(raw.ljust(16))
        blobs.append(np.ascontiguousarray(values, dtype="<f8").tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(blobs))
    except OSError as exc:
        raise OSError(f"cannot write snapshot to {path}: {exc}") from exc
    return str(path)


def read_snapshot(path):
    """Returns (meta, fields) with meta keys d, N, L, t and float64 arrays."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read snapshot from {path}: {exc}") from exc
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a CSIM1 snapshot")
    off = len(MAGIC)
    d, N, L, t, count = _HEADER.unpack_from(blob, off)
    off += _HEADER.size
    meta = {"d": int(d), "N": int(N), "L": float(L), "t": float(t)}
    size = N**d
    fields = {}
    for _ in range(count):
        name = blob[off : off + 16].decode("ascii").rstrip(" ")
        off += 16
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=off)
        off += 8 * size
        fields[name] = arr.reshape((N,) * d).astype(np.float64)
    if off != len(blob):
        raise ValueError(f"{path}: trailing bytes after {count} fields")
    return meta, fields


class SnapshotWriter:
    """Snapshot sink for integrator.run: numbered CSIM1 files in a directory."""

    def __init__(self, outdir, grid: Grid):
        self.outdir = outdir
        self.grid = grid
        self.index = 0

    def __call__(self, t: float, fields) -> str:
        path = f"{self.outdir}/snapshot_{self.index:05d}.bin"
        self.index += 1
        return write_snapshot(path, self.grid, t, fields)

"""Snapshot and diagnostics files.

RawGrid layout (little-endian): the 4-byte magic ``CFG1``, ``uint32 m``,
``uint32 n``, ``float64 h``, ``float64 t``, then ``m*n`` float64 values in
row-major order.  A write followed by a read gives back the same bits.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import astuple, fields
from pathlib import Path

import numpy as np

from .grid import Grid

MAGIC = b"CFG1"
_HEADER = struct.Struct("<4sIIdd")
_EXT = {"raw": "raw", "pgm": "pgm", "csv": "csv", "png": "png"}

DIAG_COLUMNS = ("step", "t", "mass1", "mass2", "max_total", "viol_pre", "viol_post",
                "pd_iters", "pd_cost", "outflux_cum")


class SnapshotFormatError(ValueError):
    """A snapshot file does not follow its format."""


def snapshot_name(field_name: str, step: int, ext: str) -> str:
    return f"{field_name}_{step:06d}.{ext}"


# --------------------------------------------------------------------------
# RawGrid

def encode_raw(field, h: float, t: float) -> bytes:
    a = np.asarray(field, dtype="<f8")
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D field, got shape {a.shape}")
    m, n = a.shape
    return _HEADER.pack(MAGIC, m, n, float(h), float(t)) + np.ascontiguousarray(a).tobytes()


def decode_raw(data: bytes):
    """Parse RawGrid bytes into ``({"m", "n", "h", "t"}, field)``."""
    if len(data) < _HEADER.size:
        raise SnapshotFormatError("file shorter than the RawGrid header")
    magic, m, n, h, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 8 * m * n
    if len(data) != expected:
        raise SnapshotFormatError(f"payload is {len(data)} bytes, expected {expected} for {m}x{n}")
    field = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(m, n).astype(float)
    return {"m": m, "n": n, "h": h, "t": t}, field


def write_raw(path, field, h: float, t: float = 0.0) -> Path:
    path = Path(path)
    path.write_bytes(encode_raw(field, h, t))
    return path


def read_raw(path):
    return decode_raw(Path(path).read_bytes())


# --------------------------------------------------------------------------
# PGM and CSV

def pgm_levels(field, vmax: float = 1.0) -> np.ndarray:
    """8-bit grey levels ``floor(255 * clamp(v, 0, vmax) / vmax + 1/2)`` (round half up)."""
    if not vmax > 0:
        raise ValueError(f"vmax must be > 0, got {vmax}")
    v = np.clip(np.asarray(field, dtype=float), 0.0, vmax) / vmax
    return np.floor(255.0 * v + 0.5).astype(np.uint8)


def write_pgm(path, field, vmax: float = 1.0) -> Path:
    """Binary P5 greymap, one pixel per cell.

    Image rows run along y from top to bottom and columns along x, so the
    picture has the usual orientation of the unit square.
    """
    levels = pgm_levels(field, vmax)
    img = levels.T[::-1]
    rows, cols = img.shape
    path = Path(path)
    with open(path, "wb") as f:
        f.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(img).tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    """Grey levels of a P5 file, returned in the same ``[i, j]`` layout as the field."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise SnapshotFormatError("not a binary PGM (P5) file")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise SnapshotFormatError(f"unsupported maxval {maxval}")
    body = data[pos + 1:]
    if len(body) != rows * cols:
        raise SnapshotFormatError("PGM payload size does not match its header")
    img = np.frombuffer(body, dtype=np.uint8).reshape(rows, cols)
    return img[::-1].T.copy()


def write_csv_field(path, field) -> Path:
    """Plain comma-separated matrix, row ``i`` per line, ``%.17g`` with '.' decimals."""
    buf = io.StringIO()
    np.savetxt(buf, np.asarray(field, dtype=float), fmt="%.17g", delimiter=",", newline="\n")
    path = Path(path)
    with open(path, "w", newline="") as f:
        f.write(buf.getvalue())
    return path


def read_csv_field(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


# --------------------------------------------------------------------------
# sinks

class SnapshotSink:
    """Writes fields to ``output_dir`` as ``<field>_<step:06d>.<ext>``.

    Densities are written in every requested format.  The pressure and the
    two flux components go to RawGrid and CSV only, since they have no fixed
    grey-level range.  With ``"png"`` a three-panel figure is rendered for
    each snapshot as well.
    """

    def __init__(self, output_dir, formats=("raw", "csv"), grid: Grid | None = None):
        self.output_dir = Path(output_dir)
        self.formats = tuple(formats)
        for fmt in self.formats:
            if fmt not in _EXT:
                raise ValueError(f"unknown snapshot format {fmt!r}")
        self.grid = grid
        self.written: list[Path] = []
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def write_snapshot(self, field_name: str, step: int, t: float, field,
                       formats=None, vmax: float = 1.0) -> list[Path]:
        field = np.asarray(field, dtype=float)
        h = self.grid.h if self.grid is not None else 1.0 / field.shape[0]
        out = []
        for fmt in formats or self.formats:
            path = self.output_dir / snapshot_name(field_name, step, fmt)
            if fmt == "raw":
                out.append(write_raw(path, field, h, t))
            elif fmt == "csv":
                out.append(write_csv_field(path, field))
            elif fmt == "pgm":
                out.append(write_pgm(path, field, vmax))
        self.written.extend(out)
        return out

    def emit(self, step, t, rho1, rho2, pressure, flux, velocity=None):
        scalar = [f for f in self.formats if f in ("raw", "csv")]
        for name, field in (("rho1", rho1), ("rho2", rho2), ("total", rho1 + rho2)):
            self.write_snapshot(name, step, t, field)
        self.write_snapshot("pressure", step, t, pressure, formats=scalar or ["raw"])
        self.write_snapshot("flux_x", step, t, flux[0], formats=scalar or ["raw"])
        self.write_snapshot("flux_y", step, t, flux[1], formats=scalar or ["raw"])
        if "png" in self.formats and self.grid is not None:
            from .plotting import plot_snapshot

            path = self.output_dir / snapshot_name("snapshot", step, "png")
            plot_snapshot(path, self.grid, rho1, rho2, flux, velocity, t)
            self.written.append(path)

    def dump_failure(self, step, t, **fields):
        """Save the fields that led to a failed step for later inspection."""
        for name, field in fields.items():
            self.write_snapshot(f"failed_{name}", step, t, field, formats=["raw"])


# --------------------------------------------------------------------------
# diagnostics

def _row(d) -> list[str]:
    vals = astuple(d)[:len(DIAG_COLUMNS)]
    return [str(int(v)) if isinstance(v, (int, np.integer)) and not isinstance(v, bool)
            else format(float(v), ".17g") for v in vals]


def write_diagnostics(path, diags) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(DIAG_COLUMNS)
        for d in diags:
            w.writerow(_row(d))
    return path


def read_diagnostics(path):
    from .simulator import StepDiagnostics

    names = [f.name for f in fields(StepDiagnostics)][:len(DIAG_COLUMNS)]
    out = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != DIAG_COLUMNS:
            raise SnapshotFormatError(f"unexpected diagnostics header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(DIAG_COLUMNS):
                raise SnapshotFormatError(f"line {lineno}: expected {len(DIAG_COLUMNS)} columns")
            try:
                vals = [int(row[0])] + [float(x) for x in row[1:7]] + [int(row[7])] + \
                       [float(x) for x in row[8:]]
            except ValueError as exc:
                raise SnapshotFormatError(f"line {lineno}: {exc}") from None
            out.append(StepDiagnostics(**dict(zip(names, vals))))
    return out

# spde/formats.py
"""
On-disk formats.

Binary files (noise slabs "RSNS", solution fields "RSUF") are a 48-byte
little-endian header followed by row-major little-endian float64 data:

    magic 4s | version u16 | reserved u16 | rows u32 | nx u32 |
    H f64 | dt f64 | dx f64 | seed u64

rows is the number of stored time rows: nt for a slab, nt + 1 for a field.
CSV files use fixed column orders so that identical runs give identical bytes.
"""

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from spde.errors import ValidationError
from spde.kernels import HomogeneousField
from spde.noise import NoiseSlab
from spde.regularity import ExponentFit, MomentRow, MomentTable
from spde.solver import SolutionField

HEADER = struct.Struct("<4sHHIIdddQ")
FORMAT_VERSION = 1
SLAB_MAGIC = b"RSNS"
FIELD_MAGIC = b"RSUF"

MOMENT_COLUMNS = ["direction", "p", "h", "moment", "stderr", "n_paths"]
FIT_COLUMNS = ["direction", "p", "slope", "intercept", "slope_stderr", "r_squared",
               "exponent", "ci95_low", "ci95_high", "n_points"]


@dataclass(frozen=True)
class BinaryHeader:
    magic: bytes
    version: int
    rows: int
    nx: int
    H: float
    dt: float
    dx: float
    seed: int


def _write_binary(path: Path, header: BinaryHeader, data: np.ndarray) -> Path:
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(HEADER.pack(header.magic, header.version, 0, header.rows, header.nx,
                             header.H, header.dt, header.dx, header.seed))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
    return path


def read_binary(path: Path) -> tuple[BinaryHeader, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ValidationError(f"{path} is too short for a header", field="path")
    magic, version, _, rows, nx, H, dt, dx, seed = HEADER.unpack_from(raw)
    if magic not in (SLAB_MAGIC, FIELD_MAGIC):
        raise ValidationError(f"{path} has unknown magic {magic!r}", field="path")
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path} has unsupported version {version}", field="path")
    data = np.frombuffer(raw, dtype="<f8", offset=HEADER.size)
    if data.size != rows * nx:
        raise ValidationError(f"{path} holds {data.size} values, header says {rows}x{nx}",
                              field="path")
    return BinaryHeader(magic, version, rows, nx, H, dt, dx, seed), data.reshape(rows, nx)


def write_noise_slab(path: Path, slab: NoiseSlab) -> Path:
    grid = slab.grid
    header = BinaryHeader(SLAB_MAGIC, FORMAT_VERSION, grid.nt, grid.nx, slab.H.value,
                          grid.dt, grid.dx, slab.seed)
    return _write_binary(path, header, slab.increments)


def write_solution_field(path: Path, field: SolutionField, H: float) -> Path:
    grid = field.grid
    header = BinaryHeader(FIELD_MAGIC, FORMAT_VERSION, field.u.shape[0], grid.nx, float(H),
                          grid.dt, grid.dx, field.seed)
    return _write_binary(path, header, field.u)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_homogeneous_csv(path: Path, homogeneous: HomogeneousField,
                          time_stride: int = 1) -> Path:
    """(t, x, w) over the observation window."""
    grid = homogeneous.grid
    window = grid.window
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = _writer(fh)
        out.writerow(["t", "x", "w"])
        for n in range(0, grid.nt + 1, time_stride):
            t = grid.t[n]
            for x, w in zip(grid.x[window], homogeneous.w[n, window]):
                out.writerow([repr(float(t)), repr(float(x)), repr(float(w))])
    return path


def write_field_slices_csv(path: Path, field: SolutionField, rows: Iterable[int]) -> Path:
    grid = field.grid
    window = grid.window
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = _writer(fh)
        out.writerow(["t", "x", "u"])
        for n in rows:
            for x, u in zip(grid.x[window], field.u[n, window]):
                out.writerow([repr(float(grid.t[n])), repr(float(x)), repr(float(u))])
    return path


def write_distances_csv(path: Path, distances: Sequence[float]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = _writer(fh)
        out.writerow(["k", "distance"])
        for k, d in enumerate(distances):
            out.writerow([k, repr(float(d))])
    return path


def write_moment_tables_csv(path: Path, tables: Sequence[MomentTable]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = _writer(fh)
        out.writerow(MOMENT_COLUMNS)
        for table in tables:
            for row in table.rows:
                out.writerow([table.direction, repr(float(table.p)), repr(row.h),
                              repr(row.moment), repr(row.stderr), row.n_paths])
    return path


def read_moment_tables_csv(path: Path, kind: str = "", H: float = float("nan")) -> list[MomentTable]:
    """Tables keyed by (direction, p) in file order; per-path values are not stored."""
    tables: dict[tuple[str, float], MomentTable] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MOMENT_COLUMNS:
            raise ValidationError(f"{path} columns {reader.fieldnames} != {MOMENT_COLUMNS}",
                                  field="path")
        for rec in reader:
            key = (rec["direction"], float(rec["p"]))
            if key not in tables:
                tables[key] = MomentTable(rec["direction"], key[1], kind, H, [])
            tables[key].rows.append(MomentRow(float(rec["h"]), float(rec["moment"]),
                                              float(rec["stderr"]), int(rec["n_paths"]), 0))
    return list(tables.values())


def write_fits_csv(path: Path, fits: Sequence[ExponentFit]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = _writer(fh)
        out.writerow(FIT_COLUMNS)
        for f in fits:
            out.writerow([f.direction, repr(float(f.p)), repr(f.slope), repr(f.intercept),
                          repr(f.slope_stderr), repr(f.r_squared), repr(f.exponent),
                          repr(float(f.ci95[0])), repr(float(f.ci95[1])), f.n_points])
    return path

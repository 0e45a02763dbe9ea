#!/usr/bin/env python3
"""
Field I/O
Binary snapshots of fields and the CSV artifacts written by the runner

Snapshot layout (little endian):
    b"QGF1" | u32 n | f64 L | u8 kind | payload
kind 0 carries n*n f64 samples row-major (samples[i1, i2], i1 slowest);
kind 1 carries n*n complex coefficients as interleaved (re, im) f64 pairs
in FFT layout.
"""

import csv
import logging
import math
import struct
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Union

import numpy as np

from besov_analysis import Trajectory
from models import Grid2D, ProbeReport
from spectral_core import RealField, SpectralField, lp_norm, riesz_perp_linf, transform_inverse

logger = logging.getLogger(__name__)

MAGIC = b"QGF1"
HEADER = struct.Struct("<4sIdB")
KIND_SAMPLES = 0
KIND_SPECTRAL = 1

MANIFEST_COLUMNS = ["step", "time", "linf", "l2", "riesz_linf", "mean"]
PROBE_COLUMNS = ["name", "expected", "measured", "deviation", "tolerance", "status"]
NORM_COLUMNS = ["quantity", "s", "p", "q", "homogeneous", "value"]


class SnapshotFormatError(ValueError):
    """Raised for truncated, mislabelled or inconsistent snapshot files"""


class SnapshotCodec:
    """
    Encodes fields to the QGF1 byte layout and back
    """

    def encode(self, field: Union[RealField, SpectralField]) -> bytes:
        if isinstance(field, RealField):
            kind = KIND_SAMPLES
            payload = np.ascontiguousarray(field.samples, dtype="<f8").tobytes()
        else:
            kind = KIND_SPECTRAL
            payload = np.ascontiguousarray(field.coeffs, dtype="<c16").tobytes()
        return HEADER.pack(MAGIC, field.grid.n, field.grid.period, kind) + payload

    def decode(self, blob: bytes, dealias_fraction: float = 2.0 / 3.0) -> Union[RealField, SpectralField]:
        """
        Decode a snapshot

        Args:
            blob: raw file contents
            dealias_fraction: dealiasing rule of the grid the field is attached to

        Returns:
            RealField for kind 0, SpectralField for kind 1
        """
        if len(blob) < HEADER.size:
            raise SnapshotFormatError(f"snapshot is {len(blob)} bytes, shorter than the header")
        magic, n, period, kind = HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise SnapshotFormatError(f"bad magic {magic!r}")
        if kind not in (KIND_SAMPLES, KIND_SPECTRAL):
            raise SnapshotFormatError(f"unknown payload kind {kind}")
        if not math.isfinite(period) or period <= 0:
            raise SnapshotFormatError(f"invalid period {period}")

        width = 8 if kind == KIND_SAMPLES else 16
        expected = HEADER.size + n * n * width
        if len(blob) != expected:
            raise SnapshotFormatError(f"expected {expected} bytes for n={n}, kind={kind}; got {len(blob)}")
        try:
            grid = Grid2D(n=n, period=period, dealias_fraction=dealias_fraction)
        except ValueError as e:
            raise SnapshotFormatError(f"snapshot grid rejected: {e}") from e

        dtype = "<f8" if kind == KIND_SAMPLES else "<c16"
        data = np.frombuffer(blob, dtype=dtype, offset=HEADER.size).reshape(n, n)
        if kind == KIND_SAMPLES:
            return RealField(grid=grid, samples=data.astype(float))
        return SpectralField(grid=grid, coeffs=data.astype(complex))


_codec = SnapshotCodec()


def write_snapshot(path: Union[str, Path], field: Union[RealField, SpectralField]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_codec.encode(field))
    logger.debug(f"💾 Wrote snapshot {path}")
    return path


def read_snapshot_raw(path: Union[str, Path]) -> Union[RealField, SpectralField]:
    path = Path(path)
    if not path.is_file():
        raise SnapshotFormatError(f"snapshot {path} does not exist")
    return _codec.decode(path.read_bytes())


def read_snapshot(path: Union[str, Path]) -> RealField:
    """Read a snapshot as samples, inverting spectral payloads"""
    field = read_snapshot_raw(path)
    if isinstance(field, SpectralField):
        return transform_inverse(field)
    return field


def write_trajectory_snapshots(out_dir: Union[str, Path], traj: Trajectory, prefix: str = "snap", every: int = 1) -> List[Path]:
    out_dir = Path(out_dir)
    written = []
    last = len(traj) - 1
    for index, field in enumerate(traj.fields):
        if index % every == 0 or index == last:
            written.append(write_snapshot(out_dir / f"{prefix}_{index:05d}.qgf", field))
    logger.info(f"💾 Wrote {len(written)} snapshots to {out_dir}")
    return written


# ---------------------------------------------------------------------------
# CSV artifacts
# ---------------------------------------------------------------------------

def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, np.floating):
        return repr(float(value))
    return str(value)


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
    return path


def manifest_rows(traj: Trajectory, steps: Optional[Sequence[int]] = None) -> List[List[Any]]:
    """(step, time, linf, l2, riesz_linf, mean) per stored node"""
    rows = []
    for index, (t, field) in enumerate(zip(traj.times, traj.fields)):
        step = index if steps is None else steps[index]
        rows.append([
            int(step),
            float(t),
            lp_norm(field.samples, field.grid, math.inf),
            lp_norm(field.samples, field.grid, 2),
            riesz_perp_linf(field.samples, field.grid),
            field.mean(),
        ])
    return rows


def write_manifest(
    path: Union[str, Path],
    traj: Trajectory,
    steps: Optional[Sequence[int]] = None,
    etnu_running: Optional[Sequence[float]] = None,
) -> Path:
    """Trajectory manifest; an E_T^nu running-sup column is appended when given"""
    rows = manifest_rows(traj, steps)
    header = list(MANIFEST_COLUMNS)
    if etnu_running is not None:
        header.append("etnu_partial")
        rows = [row + [float(value)] for row, value in zip(rows, etnu_running)]
    return write_csv(path, header, rows)


def write_probe_reports(path: Union[str, Path], reports: Sequence[ProbeReport]) -> Path:
    return write_csv(path, PROBE_COLUMNS, (report.csv_row() for report in reports))


def write_norm_rows(path: Union[str, Path], rows: Sequence[Sequence[Any]]) -> Path:
    return write_csv(path, NORM_COLUMNS, rows)

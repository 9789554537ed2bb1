"""Snapshot files, trajectory directories, CSV reports and plot scripts.

Snapshot layout (all little-endian)::

    magic  4 bytes  b"ELLF"
    version u32     1 for fields, 2 for kernels
    d      u32
    n      u32
    L      f64
    k      u32      version 2 only: kernel order
    data   complex128 values in C (row-major) order

A field holds n^d values; an order-k kernel on a 1-d grid holds n^(2k).
"""

from __future__ import annotations

import csv
import io as _io
import json
import struct
from pathlib import Path

import numpy as np

from .grid import BoxSpec

MAGIC = b"ELLF"
_HEAD = struct.Struct("<4sIIId")
_K = struct.Struct("<I")

SWEEP_COLUMNS = ("hbar", "N", "beta", "T", "err_density_L2", "err_momentum_L1",
                 "err_momentum_L54", "err_pressure_L1", "M0", "Mmax", "Cstar", "certified_T")


class SnapshotError(ValueError):
    pass


def encode_snapshot(data: np.ndarray, box: BoxSpec, k: int | None = None) -> bytes:
    data = np.asarray(data)
    if k is None:
        expected = box.shape
        head = _HEAD.pack(MAGIC, 1, box.d, box.n, float(box.L))
    else:
        expected = (box.n,) * (2 * k * box.d)
        head = _HEAD.pack(MAGIC, 2, box.d, box.n, float(box.L)) + _K.pack(k)
    if data.shape != expected:
        raise SnapshotError(f"array shape {data.shape} does not match header shape {expected}")
    body = np.ascontiguousarray(data, dtype="<c16").tobytes(order="C")
    return head + body


def decode_snapshot(raw: bytes) -> tuple[np.ndarray, BoxSpec, int | None]:
    if len(raw) < _HEAD.size:
        raise SnapshotError("truncated header")
    magic, version, d, n, L = _HEAD.unpack_from(raw, 0)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    off = _HEAD.size
    k = None
    if version == 1:
        shape = (n,) * d
    elif version == 2:
        if len(raw) < off + _K.size:
            raise SnapshotError("truncated kernel header")
        (k,) = _K.unpack_from(raw, off)
        off += _K.size
        shape = (n,) * (2 * k * d)
    else:
        raise SnapshotError(f"unsupported snapshot version {version}")
    count = int(np.prod(shape))
    if len(raw) != off + 16 * count:
        raise SnapshotError(f"expected {count} complex values, file holds {(len(raw) - off) / 16:g}")
    data = np.frombuffer(raw, dtype="<c16", count=count, offset=off).reshape(shape).copy()
    return data, BoxSpec(d, L, n), k


def write_snapshot(path, data: np.ndarray, box: BoxSpec, k: int | None = None) -> Path:
    path = Path(path)
    path.write_bytes(encode_snapshot(data, box, k))
    return path


def read_snapshot(path) -> tuple[np.ndarray, BoxSpec, int | None]:
    return decode_snapshot(Path(path).read_bytes())


def write_trajectory(directory, box: BoxSpec, snapshots, records: list[dict],
                     header: dict | None = None, stem: str = "snap") -> Path:
    """One snapshot file per record plus ``records.json`` holding header and records."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, snap in enumerate(snapshots):
        name = f"{stem}_{i:05d}.ellf"
        write_snapshot(directory / name, snap, box)
        names.append(name)
    sidecar = {"header": header or {}, "files": names, "records": records}
    (directory / "records.json").write_text(json.dumps(sidecar, indent=1, sort_keys=True))
    return directory


def read_trajectory(directory):
    directory = Path(directory)
    side = json.loads((directory / "records.json").read_text())
    snaps = [read_snapshot(directory / f)[0] for f in side["files"]]
    return snaps, side["records"], side["header"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_csv(rows: list[dict]) -> str:
    """RFC-4180 text with the fixed sweep header, rows sorted by (hbar, N, beta, T)."""
    missing = [c for r in rows for c in SWEEP_COLUMNS if c not in r]
    if missing:
        raise KeyError(f"sweep rows lack columns: {sorted(set(missing))}")
    ordered = sorted(rows, key=lambda r: tuple(float(r[c]) for c in ("hbar", "N", "beta", "T")))
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(SWEEP_COLUMNS)
    for r in ordered:
        w.writerow([_fmt(r[c]) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def write_sweep(path, rows: list[dict], header: dict) -> Path:
    """CSV report plus ``<name>.json`` sidecar carrying the run header."""
    path = Path(path)
    path.write_text(sweep_csv(rows), newline="")
    path.with_suffix(".json").write_text(json.dumps({"header": header}, indent=1, sort_keys=True))
    return path


def read_sweep(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True, default=_jsonable))
    return path


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def gnuplot_script(data_file: str, x: str, ys: list[str], columns, title: str,
                   logscale: bool = True) -> str:
    """Plain gnuplot script plotting CSV columns ``ys`` against ``x``."""
    cols = list(columns)
    lines = [
        "set datafile separator ','",
        f"set title '{title}'",
        f"set xlabel '{x}'",
        "set key left top",
    ]
    if logscale:
        lines.append("set logscale xy")
    parts = [f"'{data_file}' every ::1 using {cols.index(x) + 1}:{cols.index(y) + 1} "
             f"with linespoints title '{y}'" for y in ys]
    lines.append("plot " + ", \\\n     ".join(parts))
    return "\n".join(lines) + "\n"

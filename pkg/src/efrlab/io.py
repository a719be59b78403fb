"""Persistence: binary snapshots, run directories, manifests, CSV and VTK.

Snapshot layout (all little endian)::

    magic  b"EFRS"        4 bytes
    version               uint16
    nx, ny                uint32, uint32
    Lx, Ly, time          float64 x 3
    n_fields              uint8
    per field: code (1=u, 2=v, 3=p) uint8, rows uint32, cols uint32
    payload: float64 values of each field in header order, row-major

A run directory holds ``manifest.json``, ``snapshots/step_XXXXXXX.efrs`` and
CSV side tables.  The manifest is written with ``status="running"`` before a
run and rewritten with ``status="complete"`` afterwards.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import re
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EfrError, IncompatibleGridsError
from .fields import ScalarField, State, VectorField
from .grid import Grid

MAGIC = b"EFRS"
FORMAT_VERSION = 1
FIELD_CODES = {"u": 1, "v": 2, "p": 3}
_HEADER = struct.Struct("<4sHIIdddB")
_FIELD = struct.Struct("<BII")
_DTYPE = np.dtype("<f8")
SNAPSHOT_DIR = "snapshots"
MANIFEST = "manifest.json"
_STEP_RE = re.compile(r"step_(\d+)\.efrs$")


class SnapshotFormatError(EfrError, ValueError):
    """A snapshot file is truncated or has an unexpected header."""


# ------------------------------------------------------------------ snapshots
def encode_snapshot(state: State) -> bytes:
    g = state.grid
    arrays = (("u", state.velocity.u), ("v", state.velocity.v), ("p", state.pressure.values))
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, g.nx, g.ny, float(g.spec.Lx), float(g.spec.Ly),
                          float(state.time), len(arrays))]
    for name, a in arrays:
        parts.append(_FIELD.pack(FIELD_CODES[name], *a.shape))
    for _, a in arrays:
        parts.append(np.ascontiguousarray(a, dtype=_DTYPE).tobytes())
    return b"".join(parts)


def decode_snapshot(data: bytes) -> dict:
    """Header values and field arrays of an encoded snapshot."""
    if len(data) < _HEADER.size:
        raise SnapshotFormatError("truncated header")
    magic, version, nx, ny, Lx, Ly, time, nf = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise SnapshotFormatError(f"unsupported format version {version}")
    off = _HEADER.size
    layout = []
    for _ in range(nf):
        if len(data) < off + _FIELD.size:
            raise SnapshotFormatError("truncated field table")
        code, rows, cols = _FIELD.unpack_from(data, off)
        layout.append((code, rows, cols))
        off += _FIELD.size
    names = {c: n for n, c in FIELD_CODES.items()}
    expected = off + sum(r * c for _, r, c in layout) * _DTYPE.itemsize
    if len(data) != expected:
        raise SnapshotFormatError(f"payload length {len(data)} does not match header ({expected})")
    fields = {}
    for code, rows, cols in layout:
        if code not in names:
            raise SnapshotFormatError(f"unknown field code {code}")
        count = rows * cols
        fields[names[code]] = np.frombuffer(data, _DTYPE, count, off).reshape(rows, cols).astype(float)
        off += count * _DTYPE.itemsize
    return {"nx": nx, "ny": ny, "Lx": Lx, "Ly": Ly, "time": time, "fields": fields}


def save_snapshot(path, state: State) -> str:
    """Write ``state`` and return the SHA-256 of the file contents."""
    data = encode_snapshot(state)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_snapshot(path, grid: Grid) -> State:
    """Read a snapshot onto ``grid``; dimensions and extent must match."""
    d = decode_snapshot(Path(path).read_bytes())
    if (d["nx"], d["ny"]) != (grid.nx, grid.ny) or (d["Lx"], d["Ly"]) != grid.extent:
        raise IncompatibleGridsError(f"{path}: snapshot grid {d['nx']}x{d['ny']} does not match {grid!r}")
    f = d["fields"]
    if f["u"].shape != grid.u_shape or f["v"].shape != grid.v_shape or f["p"].shape != (grid.nx, grid.ny):
        raise SnapshotFormatError(f"{path}: field shapes do not match the grid")
    return State(VectorField(grid, f["u"], f["v"]), ScalarField(grid, f["p"]), d["time"])


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def snapshot_name(step: int) -> str:
    return f"step_{step:07d}.efrs"


def write_snapshots(directory, states, steps) -> dict:
    """Store states under ``directory/snapshots``; returns ``{file: sha256}``."""
    sdir = Path(directory) / SNAPSHOT_DIR
    sdir.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for n, s in zip(steps, states):
        name = snapshot_name(n)
        hashes[f"{SNAPSHOT_DIR}/{name}"] = save_snapshot(sdir / name, s)
    return hashes


def list_snapshots(directory) -> list:
    """``(step, path)`` pairs sorted by step."""
    sdir = Path(directory) / SNAPSHOT_DIR
    if not sdir.is_dir():
        raise FileNotFoundError(f"{directory}: no snapshot directory")
    out = []
    for p in sdir.iterdir():
        m = _STEP_RE.search(p.name)
        if m:
            out.append((int(m.group(1)), p))
    return sorted(out)


def read_snapshots(directory, grid: Grid):
    """``(steps, states)`` of a run directory."""
    pairs = list_snapshots(directory)
    return [n for n, _ in pairs], [load_snapshot(p, grid) for _, p in pairs]


# ------------------------------------------------------------------ manifest
def write_manifest(directory, manifest: dict) -> Path:
    path = Path(directory) / MANIFEST
    Path(directory).mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    if not path.is_file():
        raise FileNotFoundError(f"{directory}: missing {MANIFEST}")
    return json.loads(path.read_text())


def new_manifest(kind: str, config: dict, inputs: dict | None = None) -> dict:
    return {"kind": kind, "status": "running", "version": __version__, "config": config,
            "inputs": inputs or {}, "outputs": {}, "wall_clock_s": None}


# ------------------------------------------------------------------ csv
def format_float(x) -> str:
    """Shortest round-tripping text for a float (``nan`` for NaN)."""
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path, header, rows) -> None:
    """CSV with ``\\n`` line endings; floats use :func:`format_float`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path) -> tuple:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ------------------------------------------------------------------ vtk
def write_vtk(path, state: State, title: str = "efrlab snapshot") -> None:
    """Legacy ASCII VTK structured grid with cell-centered fields.

    Cell data: ``pressure``, ``velocity`` (face averages to centers),
    ``solid`` (1 in obstacle cells).
    """
    g = state.grid
    nx, ny = g.nx, g.ny
    xs = np.linspace(0.0, g.spec.Lx, nx + 1)
    ys = np.linspace(0.0, g.spec.Ly, ny + 1)
    u, v = state.velocity.u, state.velocity.v
    if g.periodic:
        uc = 0.5 * (u + np.roll(u, -1, axis=0))
        vc = 0.5 * (v + np.roll(v, -1, axis=1))
    else:
        uc = 0.5 * (u[:-1] + u[1:])
        vc = 0.5 * (v[:, :-1] + v[:, 1:])
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET STRUCTURED_GRID",
             f"DIMENSIONS {nx + 1} {ny + 1} 1", f"POINTS {(nx + 1) * (ny + 1)} double"]
    # VTK orders points with x varying fastest
    for j in range(ny + 1):
        for i in range(nx + 1):
            lines.append(f"{float(xs[i])!r} {float(ys[j])!r} 0.0")
    lines.append(f"CELL_DATA {nx * ny}")
    lines += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
    lines += [repr(float(x)) for x in state.pressure.values.T.ravel()]
    lines.append("VECTORS velocity double")
    lines += [f"{float(a)!r} {float(b)!r} 0.0" for a, b in zip(uc.T.ravel(), vc.T.ravel())]
    lines += ["SCALARS solid int 1", "LOOKUP_TABLE default"]
    lines += [str(int(s)) for s in g.solid.T.ravel()]
    Path(path).write_text("\n".join(lines) + "\n")
